//! The gated context encoder up close: gate values, the source→context
//! attention of one example, and the two degenerate settings of the gate.
//!
//! ```text
//! cargo run --release --example gated_context
//! ```

use ctxnmt::autodiff::Tape;
use ctxnmt::context::FusionOverrides;
use ctxnmt::transformer::{model_context, model_source, ContextMode, Model, ModelConfig, Padded};

fn memory(model: &Model<f64>, src: &[usize], ctx: &[usize]) -> ctxnmt::Result<Vec<f64>> {
    let mut tape = Tape::eval();
    let enc = model.encode_batch(
        &mut tape,
        &Padded::from_seqs(&[model_source(src)]),
        &Padded::from_seqs(&[model_context(ctx)]),
    )?;
    Ok(tape.values(enc.memory).to_vec())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> ctxnmt::Result<()> {
    let mut model = Model::<f64>::new(ModelConfig::tiny(24, 24, ContextMode::Gated), 3)?;
    let (src, ctx) = ([5, 6, 7], [9, 10, 11, 12]);

    let state = model.encode(&src, &ctx)?;
    let gate = state.gate.as_ref().expect("gated model");
    let mean_gate = gate.iter().sum::<f64>() / gate.len() as f64;
    println!("mean gate value (weight of the source branch): {mean_gate:.3}");
    let att = state.context_attention.as_ref().expect("gated model");
    let cols = state.context_tokens.len();
    println!("head-averaged source→context attention ({} × {cols}):", state.len);
    for row in att.chunks(cols) {
        println!("  {}", row.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(" "));
    }

    let base = memory(&model, &src, &ctx)?;
    let other = memory(&model, &src, &[20, 21])?;
    println!("context swap changes the encoding by {:.3e}", max_abs_diff(&base, &other));

    model.overrides = FusionOverrides {
        force_gate: Some(1.0),
        zero_context: false,
    };
    let a = memory(&model, &src, &ctx)?;
    let b = memory(&model, &src, &[20, 21])?;
    println!("gate forced to 1: context swap changes it by {:.3e}", max_abs_diff(&a, &b));

    model.overrides.zero_context = true;
    let mut tape = Tape::eval();
    let src_pad = Padded::from_seqs(&[model_source(&src)]);
    let with = model.context_aware_encode(&mut tape, &src_pad, &Padded::from_seqs(&[model_context(&ctx)]))?;
    let without = model.encode_without_context_branch(&mut tape, &src_pad)?;
    println!(
        "zeroed context path vs. self-attention-only layer: {:.3e}",
        max_abs_diff(tape.values(with.memory), tape.values(without))
    );
    Ok(())
}
