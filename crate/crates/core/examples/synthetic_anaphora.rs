//! Trains the baseline, gated and concatenation models on the toy gendered
//! language and prints the comparison.
//!
//! ```text
//! cargo run --release --example synthetic_anaphora -- [seed] [max_steps]
//! ```

use ctxnmt::experiment::{run_synthetic_experiment, ExperimentConfig};

fn main() -> ctxnmt::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = ExperimentConfig::standard(seed);
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.optimizer.max_steps = steps;
    }
    let report = run_synthetic_experiment(&cfg, |line| eprintln!("{line}"))?;
    print!("{}", report.summary());
    Ok(())
}
