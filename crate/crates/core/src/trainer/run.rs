use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, clip_grad_norm, make_batches, OptimizerConfig, TrainState};
use crate::autodiff::{Scalar, Tape};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::transformer::{Batch, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub optimizer: OptimizerConfig,
    /// Where `best.ckpt` and `last.ckpt` go; nothing is written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Append-only metrics log.
    pub metrics_log: Option<PathBuf>,
    /// Stop after this many dev evaluations without improvement.
    pub patience: Option<usize>,
    /// Stop once the dev loss is at or below this value.
    pub target_dev_loss: Option<f64>,
}

impl TrainOptions {
    pub fn new(optimizer: OptimizerConfig) -> Self {
        TrainOptions {
            optimizer,
            checkpoint_dir: None,
            metrics_log: None,
            patience: None,
            target_dev_loss: None,
        }
    }
}

/// One metrics-log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        let dev = self.dev_loss.map_or("-".to_string(), |d| format!("{d:.6}"));
        format!("step={} lr={:.6e} train_loss={:.6} dev_loss={dev}", self.step, self.lr, self.train_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub epochs: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub best_dev_loss: Option<f64>,
    pub best_step: Option<usize>,
    pub history: Vec<MetricsRecord>,
}

/// Token-weighted mean cross-entropy (no label smoothing) over `batches`.
pub fn dev_loss<T: Scalar>(model: &Model<T>, batches: &[Batch]) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for b in batches {
        let mut tape = Tape::eval();
        let loss = model.loss_with_smoothing(&mut tape, b, 0.0)?;
        let n = b.target_tokens();
        total += tape.values(loss)[0].as_f64() * n as f64;
        tokens += n;
    }
    Ok(total / tokens.max(1) as f64)
}

fn snapshot<T: Scalar>(model: &Model<T>) -> Vec<Vec<T>> {
    model.params.iter().map(|(_, p)| p.value.clone()).collect()
}

fn restore<T: Scalar>(model: &mut Model<T>, values: &[Vec<T>]) {
    for (p, v) in model.params.iter_mut().zip(values) {
        p.value.clone_from(v);
    }
}

/// Trains `model` in place. With a dev set, the parameters with the lowest
/// dev loss are restored at the end. A non-finite training loss aborts with
/// an error; the best checkpoint on disk is left untouched.
pub fn train<T: Scalar>(model: &mut Model<T>, train_set: &[Example], dev_set: &[Example], opts: &TrainOptions) -> Result<TrainReport> {
    let cfg = &opts.optimizer;
    cfg.validate()?;
    if cfg.d_model != model.config.d_model {
        return Err(Error::config(format!(
            "optimizer d_model {} differs from model d_model {}",
            cfg.d_model, model.config.d_model
        )));
    }
    let max_len = model.config.max_len;
    let dev_batches = if dev_set.is_empty() {
        Vec::new()
    } else {
        make_batches(dev_set, cfg.token_budget, max_len, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?
    };
    if let Some(dir) = &opts.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut log = match &opts.metrics_log {
        Some(p) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };
    let mut state = TrainState::new(&model.params);
    let mut report = TrainReport {
        steps: 0,
        epochs: 0,
        first_loss: f64::NAN,
        final_loss: f64::NAN,
        best_dev_loss: None,
        best_step: None,
        history: Vec::new(),
    };
    let mut best: Option<Vec<Vec<T>>> = None;
    let mut stale = 0;
    let (mut window_loss, mut window_n) = (0.0, 0usize);
    'outer: while state.step < cfg.max_steps {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(report.epochs as u64));
        let batches = make_batches(train_set, cfg.token_budget, max_len, &mut rng)?;
        report.epochs += 1;
        for batch in &batches {
            let step = state.step + 1;
            let mut tape = Tape::train(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64));
            let loss = model.loss(&mut tape, batch)?;
            let lv = tape.values(loss)[0].as_f64();
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            tape.backward(loss)?;
            tape.accumulate_param_grads(&mut model.params);
            drop(tape);
            if let Some(c) = cfg.clip_norm {
                clip_grad_norm(&mut model.params, c);
            }
            let lr = cfg.lr(step)?;
            adam_step(&mut model.params, &mut state, lr, cfg)?;
            if report.first_loss.is_nan() {
                report.first_loss = lv;
            }
            report.final_loss = lv;
            window_loss += lv;
            window_n += 1;
            let eval_now = step % cfg.checkpoint_every == 0 || step == cfg.max_steps;
            if eval_now {
                let dev = if dev_batches.is_empty() {
                    None
                } else {
                    Some(dev_loss(model, &dev_batches)?)
                };
                let rec = MetricsRecord {
                    step,
                    lr,
                    train_loss: window_loss / window_n as f64,
                    dev_loss: dev,
                };
                (window_loss, window_n) = (0.0, 0);
                if let Some(w) = log.as_mut() {
                    writeln!(w, "{}", rec.to_line())?;
                    w.flush()?;
                }
                report.history.push(rec);
                if let Some(dir) = &opts.checkpoint_dir {
                    model.save(dir.join("last.ckpt"))?;
                }
                if let Some(d) = dev {
                    if report.best_dev_loss.is_none_or(|b| d < b) {
                        report.best_dev_loss = Some(d);
                        report.best_step = Some(step);
                        best = Some(snapshot(model));
                        stale = 0;
                        if let Some(dir) = &opts.checkpoint_dir {
                            model.save(dir.join("best.ckpt"))?;
                        }
                    } else {
                        stale += 1;
                    }
                    if opts.target_dev_loss.is_some_and(|t| d <= t) || opts.patience.is_some_and(|p| stale >= p) {
                        report.steps = step;
                        break 'outer;
                    }
                }
            }
            report.steps = step;
            if step >= cfg.max_steps {
                break 'outer;
            }
        }
    }
    if let Some(values) = best {
        restore(model, &values);
    }
    Ok(report)
}
