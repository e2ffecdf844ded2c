use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Var};
use crate::error::Result;

/// Coordinates sampled per parameter tensor.
pub const MAX_COORDS_PER_TENSOR: usize = 200;

/// Coordinates whose error exceeds this are re-estimated with a 10× smaller
/// step, keeping the better of the two estimates.
pub const RETRY_ABOVE: f64 = 1e-5;

/// Denominator floor of the relative error. Some gradients are exactly zero
/// (e.g. attention key biases, which softmax cancels), where the numeric side
/// is pure rounding noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// (parameter name, flat index, analytic, numeric) at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

fn eval_scalar<F>(f: &F, store: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::eval();
    let loss = f(&mut tape, store)?;
    Ok(tape.values(loss)[0])
}

/// Compares reverse-mode gradients of the scalar built by `f` with central
/// finite differences, returning the worst relative error
/// `|a − n| / max(|a|, |n|, REL_ERR_FLOOR)` over the sampled coordinates.
/// Poorly matching coordinates get a second estimate at `step / 10`.
///
/// `f` must be deterministic; it is always run on eval-mode tapes.
pub fn finite_difference_check<F>(store: &ParamStore<f64>, f: F, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grads();
    let mut tape = Tape::eval_with_grads();
    let loss = f(&mut tape, &analytic)?;
    tape.backward(loss)?;
    tape.accumulate_param_grads(&mut analytic);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for id in store.ids() {
        let len = store.get(id).value.len();
        let coords: Vec<usize> = if len <= MAX_COORDS_PER_TENSOR {
            (0..len).collect()
        } else {
            let mut c = rand::seq::index::sample(&mut rng, len, MAX_COORDS_PER_TENSOR).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let a = analytic.get(id).grad[idx];
            let mut central = |h: f64| -> Result<f64> {
                let orig = store.get(id).value[idx];
                probe.get_mut(id).value[idx] = orig + h;
                let plus = eval_scalar(&f, &probe)?;
                probe.get_mut(id).value[idx] = orig - h;
                let minus = eval_scalar(&f, &probe)?;
                probe.get_mut(id).value[idx] = orig;
                Ok((plus - minus) / (2.0 * h))
            };
            let mut numeric = central(step)?;
            let mut err = rel_err(a, numeric);
            if err > RETRY_ABOVE {
                // a ReLU kink inside ±step spoils the estimate; a 10× smaller
                // step moves past it, while a wrong gradient stays wrong
                let finer = central(step / 10.0)?;
                if rel_err(a, finer) < err {
                    numeric = finer;
                    err = rel_err(a, finer);
                }
            }
            report.coords_checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((store.get(id).name.clone(), idx, a, numeric));
            }
        }
    }
    Ok(report)
}
