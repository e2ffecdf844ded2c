//! Train a small context-agnostic Transformer on a handful of pairs, save
//! and reload the checkpoint, and translate with greedy and beam search.
//!
//! ```text
//! cargo run --release --example train_translate
//! ```

use ctxnmt::data::{Example, Vocab};
use ctxnmt::trainer::{noam_lr, train, OptimizerConfig, TrainOptions};
use ctxnmt::transformer::{ContextMode, DecodeMode, Model, ModelConfig};

const PAIRS: [(&str, &str); 5] = [
    ("the cat sleeps", "koshka spit"),
    ("the dog sleeps", "sobaka spit"),
    ("the cat eats", "koshka est"),
    ("a big dog runs", "bolshaya sobaka bezhit"),
    ("it rains", "idet dozhd"),
];

fn main() -> ctxnmt::Result<()> {
    println!("schedule: lr(1)={:.4e} lr(4000)={:.4e} for d_model 512", noam_lr(1, 512, 4000)?, noam_lr(4000, 512, 4000)?);

    let words = |i: usize| PAIRS.iter().flat_map(move |p| [p.0, p.1][i].split_whitespace());
    let (src, tgt) = (Vocab::build(words(0)), Vocab::build(words(1)));
    let data: Vec<Example> = PAIRS
        .iter()
        .enumerate()
        .map(|(i, (s, t))| {
            let s: Vec<&str> = s.split_whitespace().collect();
            let t: Vec<&str> = t.split_whitespace().collect();
            Example {
                example_id: i,
                context_ids: vec![],
                source_ids: src.encode(&s).0,
                target_ids: tgt.encode(&t).0,
                has_real_context: false,
            }
        })
        .collect();

    let mut cfg = ModelConfig::tiny(src.len(), tgt.len(), ContextMode::None);
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.heads = 4;
    let mut model = Model::<f32>::new(cfg, 9)?;
    let mut opt = OptimizerConfig::new(32);
    opt.warmup_steps = 30;
    opt.max_steps = 300;
    opt.token_budget = 100;
    let report = train(&mut model, &data, &[], &TrainOptions::new(opt))?;
    println!("loss {:.3} → {:.3} in {} steps", report.first_loss, report.final_loss, report.steps);

    let path = std::env::temp_dir().join(format!("ctxnmt-toy-{}.ckpt", std::process::id()));
    model.save(&path)?;
    let model = Model::<f32>::load(&path)?;
    std::fs::remove_file(&path)?;

    for (ex, (s, _)) in data.iter().zip(PAIRS) {
        let greedy = model.translate(&ex.source_ids, &[], DecodeMode::Greedy, 10)?;
        let beam = model.translate(&ex.source_ids, &[], DecodeMode::Beam(4), 10)?;
        println!(
            "{s:<16} → {:<24} (beam: {}, score {:.3})",
            tgt.decode(&greedy.ids).join(" "),
            tgt.decode(&beam.ids).join(" "),
            beam.score
        );
    }
    Ok(())
}
