//! Adam with the inverse-square-root warmup schedule, token-budget batching
//! and the training loop.

mod batching;
mod optim;
mod run;

pub use batching::{batch_plan, make_batches};
pub use optim::{adam_step, clip_grad_norm, noam_lr, OptimizerConfig, TrainState};
pub use run::{dev_loss, train, MetricsRecord, TrainOptions, TrainReport};
