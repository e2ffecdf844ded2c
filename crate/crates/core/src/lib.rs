//! Context-aware Transformer translation with a gated context encoder, built
//! on a small reverse-mode autodiff engine, together with the tooling needed
//! to show that its context attention resolves anaphora.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tensors, the tape, parameters and finite-difference checks
//! - [`transformer`]: the encoder-decoder, batching, decoding, checkpoints
//! - [`context`]: the shared-layer context encoder, the gate, the
//!   concatenation baseline and attention dumps
//! - [`trainer`]: Adam, the warmup schedule, token-budget batching, training
//! - [`data`]: corpus ingestion, context attachment, BPE, vocabularies, the
//!   prepared dataset format and the synthetic gendered language
//! - [`eval`]: BLEU, bootstrap significance, annotation files, test subsets
//! - [`analysis`]: useful attention mass, word rankings, curves, agreement
//! - [`experiment`]: the synthetic end-to-end comparison
//! - [`cli`]: the command-line front end

pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod context;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod special;
pub mod trainer;
pub mod transformer;

pub use error::{Error, Result};
