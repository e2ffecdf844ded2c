//! Trains a small gated model on the toy gendered language, then inspects
//! its source→context attention: useful mass, the words that attend most,
//! agreement with gold antecedents, and one heatmap.
//!
//! ```text
//! cargo run --release --example attention_analysis -- [out_dir]
//! ```

use ctxnmt::analysis::{
    agreement_report, heatmap_export, render_agreement_table, render_top_words_table, top_context_words, useful_mass,
    AgreementRow, PositionFilter, Punctuation, MULTI_NOUN,
};
use ctxnmt::context::attention_records;
use ctxnmt::experiment::{train_model, ExperimentConfig, SyntheticData};
use ctxnmt::transformer::ContextMode;

fn main() -> ctxnmt::Result<()> {
    let out = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let mut cfg = ExperimentConfig::standard(5);
    cfg.train_size = 4000;
    cfg.test_size = 300;
    cfg.dev_size = 200;
    cfg.optimizer.max_steps = 800;
    let data = SyntheticData::generate(&cfg)?;
    let trained = train_model(&data, &cfg, ContextMode::Gated)?;
    println!("trained {} steps in {:.0}s", trained.report.steps, trained.seconds);

    let punct = Punctuation::default();
    let records = attention_records(&trained.model, &data.test, &data.src_vocab, 100)?;
    let mass = records.iter().map(|r| useful_mass(r, &punct)).sum::<f64>() / records.len() as f64;
    println!("mean useful attention mass: {mass:.3}\n");

    let all = top_context_words(&records, &punct, 10, 5, PositionFilter::All);
    let later = top_context_words(&records, &punct, 10, 5, PositionFilter::AfterFirst);
    println!("{}", render_top_words_table(&all, &later));

    let rep = agreement_report(&records, &data.test_annotations, MULTI_NOUN, cfg.seed, &punct)?;
    let row = AgreementRow {
        pronoun: "it".into(),
        random: rep.random.percent(),
        first: rep.first.percent(),
        last: rep.last.percent(),
        attention: rep.attention.percent(),
    };
    println!("{}", render_agreement_table(&[row], &format!("{} examples with two nouns in context", rep.examples)));

    std::fs::create_dir_all(&out)?;
    let svg = out.join("heatmap.svg");
    heatmap_export(&records[0], &svg)?;
    println!("heatmap of example {} written to {}", records[0].example_id, svg.display());
    Ok(())
}
