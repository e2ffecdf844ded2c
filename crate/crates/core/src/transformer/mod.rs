//! Encoder-decoder Transformer: configuration, layers, batching, the model,
//! decoding and checkpoints.

mod batch;
mod checkpoint;
mod config;
mod decoding;
pub mod layers;
mod model;

pub use batch::{model_context, model_source, Batch, Padded};
pub use checkpoint::CHECKPOINT_VERSION;
pub use config::{ContextMode, ModelConfig};
pub use decoding::{length_penalty, normalized_score, DecodeMode, Translation, DEFAULT_BEAM_WIDTH, DEFAULT_LENGTH_ALPHA};
pub use model::{positional_encoding, ContextTrace, EncoderState, Encoded, Model};
