use crate::autodiff::{ParamStore, Scalar};
use crate::error::{Error, Result};

/// `d_model^-0.5 · min(step^-0.5, step · warmup^-1.5)`
pub fn noam_lr(step: usize, d_model: usize, warmup_steps: usize) -> Result<f64> {
    if step == 0 {
        return Err(Error::config("learning-rate schedule is defined from step 1"));
    }
    if warmup_steps == 0 || d_model == 0 {
        return Err(Error::config("warmup steps and d_model must be positive"));
    }
    let s = step as f64;
    let w = warmup_steps as f64;
    Ok((d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: usize,
    pub d_model: usize,
    /// Maximum summed source tokens per batch.
    pub token_budget: usize,
    pub max_steps: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Multiplier on the schedule (1.0 reproduces the formula).
    pub lr_scale: f64,
}

impl OptimizerConfig {
    pub fn new(d_model: usize) -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-9,
            warmup_steps: 4000,
            d_model,
            token_budget: 5000,
            max_steps: 100_000,
            checkpoint_every: 1000,
            seed: 1,
            clip_norm: Some(5.0),
            lr_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::config(format!(
                "need 0 < beta1 < beta2 < 1, got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if self.epsilon <= 0.0 || self.lr_scale <= 0.0 {
            return Err(Error::config("epsilon and lr_scale must be positive"));
        }
        if self.warmup_steps == 0 || self.token_budget == 0 || self.checkpoint_every == 0 || self.d_model == 0 {
            return Err(Error::config("warmup_steps, token_budget, checkpoint_every and d_model must be positive"));
        }
        if matches!(self.clip_norm, Some(c) if c <= 0.0) {
            return Err(Error::config("clip norm must be positive"));
        }
        Ok(())
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        Ok(self.lr_scale * noam_lr(step, self.d_model, self.warmup_steps)?)
    }
}

/// Adam moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Number of updates applied so far.
    pub step: usize,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![T::zero(); p.value.len()]).collect();
        TrainState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// Scales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for p in params.iter_mut() {
            for g in &mut p.grad {
                *g *= s;
            }
        }
    }
    norm
}

/// One bias-corrected Adam update with learning rate `lr`; gradients are
/// cleared afterwards. A non-finite gradient aborts before any parameter
/// changes.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, state: &mut TrainState<T>, lr: f64, cfg: &OptimizerConfig) -> Result<()> {
    if let Some((_, p)) = params.iter().find(|(_, p)| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::of(lr), T::of(cfg.epsilon));
    let one = T::one();
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.value.len() {
            let g = p.grad[j];
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.grad.iter_mut().for_each(|g| *g = T::zero());
    }
    Ok(())
}
