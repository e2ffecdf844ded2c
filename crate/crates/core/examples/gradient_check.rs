//! Reverse-mode gradients checked against central finite differences: first a
//! hand-built two-layer network, then full context-aware models.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use ctxnmt::autodiff::{finite_difference_check, Init, ParamStore, Tape};
use ctxnmt::data::Example;
use ctxnmt::transformer::{Batch, ContextMode, Model, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ctxnmt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::<f64>::new();
    let w1 = store.add("w1", &[4, 8], Init::Xavier { fan_in: 4, fan_out: 8 }, &mut rng);
    let gain = store.add("ln.gain", &[8], Init::Ones, &mut rng);
    let bias = store.add("ln.bias", &[8], Init::Zeros, &mut rng);
    let w2 = store.add("w2", &[8, 5], Init::Xavier { fan_in: 8, fan_out: 5 }, &mut rng);

    // relu → layer norm → softmax cross-entropy over 3 rows
    let report = finite_difference_check(
        &store,
        |tape: &mut Tape<f64>, store: &ParamStore<f64>| {
            let x = tape.constant(&[3, 4], (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?;
            let h = tape.param(store, w1);
            let h = tape.matmul(x, h)?;
            let h = tape.relu(h);
            let (g, b) = (tape.param(store, gain), tape.param(store, bias));
            let h = tape.layer_norm(h, g, b)?;
            let w = tape.param(store, w2);
            let logits = tape.matmul(h, w)?;
            tape.cross_entropy(logits, &[1, 4, 0], None, 0.0)
        },
        1e-4,
        0,
    )?;
    println!("two-layer net: max rel. err {:.2e} over {} coordinates", report.max_rel_err, report.coords_checked);

    let examples = [
        Example {
            example_id: 0,
            context_ids: vec![9, 10, 11],
            source_ids: vec![5, 6, 7],
            target_ids: vec![12, 13],
            has_real_context: true,
        },
        Example {
            example_id: 1,
            context_ids: vec![],
            source_ids: vec![8],
            target_ids: vec![14, 15, 16],
            has_real_context: false,
        },
    ];
    let refs: Vec<&Example> = examples.iter().collect();
    let batch = Batch::from_examples(&refs, 64)?;
    for mode in [ContextMode::None, ContextMode::Gated, ContextMode::Concat] {
        let model = Model::<f64>::new(ModelConfig::tiny(24, 24, mode), 1)?;
        let r = model.gradient_check(&batch, 1e-4, 1)?;
        let (name, ..) = r.worst.clone().unwrap_or_default();
        println!("{mode:>7} model: max rel. err {:.2e} (worst at {name})", r.max_rel_err);
    }
    Ok(())
}
