use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{model_context, model_source, Batch, Padded};
use super::config::{ContextMode, ModelConfig};
use super::layers::{head_average, sinusoidal_table, DecoderLayer, EncoderLayer, Linear};
use crate::autodiff::{finite_difference_check, GradCheckReport, Init, Mask, ParamId, ParamStore, Scalar, Tape, Var};
use crate::context::{FusionOverrides, GatedEncoderLayer};
use crate::error::{Error, Result};
use crate::special::PAD;

/// Sinusoidal positional encodings for `length` positions.
pub fn positional_encoding(length: usize, d_model: usize, max_len: usize) -> Result<Vec<f64>> {
    if length > max_len {
        return Err(Error::invalid(format!("sequence length {length} exceeds max_len {max_len}")));
    }
    Ok(sinusoidal_table(length, d_model))
}

/// Tape handles produced by the context-aware encoder's last layer.
#[derive(Debug, Clone)]
pub struct ContextTrace {
    /// Model-side context sequences (`<bos> … <eos>`).
    pub layout: Padded,
    /// Context encoder output `[batch, ctx, d]`.
    pub hidden: Var,
    /// Per-head source→context weights `[batch, heads, src, ctx]`.
    pub attention: Var,
    /// Gate values `[batch, src, d]`.
    pub gate: Var,
    /// Self-attention branch entering the gate.
    pub self_part: Var,
    /// Context-attention branch entering the gate.
    pub context_part: Var,
    /// Gated sum.
    pub fused: Var,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    /// Encoder output the decoder attends to, `[batch, width, d]`.
    pub memory: Var,
    pub memory_layout: Padded,
    /// Per-layer self-attention weights of the source stack.
    pub self_attention: Vec<Var>,
    pub context: Option<ContextTrace>,
}

/// Encoder output for a single example, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState<T> {
    /// `len × d_model`
    pub hidden: Vec<T>,
    pub len: usize,
    pub d_model: usize,
    /// Head-averaged self-attention per layer, `len × len` each.
    pub self_attention: Vec<Vec<T>>,
    /// Head-averaged source→context weights, `source_len × context_len`.
    pub context_attention: Option<Vec<T>>,
    pub gate: Option<Vec<T>>,
    pub source_tokens: Vec<usize>,
    pub context_tokens: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub overrides: FusionOverrides,
    pub src_embed: ParamId,
    pub tgt_embed: ParamId,
    /// Two-row segment table used by the concatenation baseline.
    pub segment_embed: Option<ParamId>,
    /// Source encoder layers. In gated mode these are the first N−1 layers
    /// and are shared with the context encoder.
    pub encoder_layers: Vec<EncoderLayer>,
    /// Last source layer in gated mode.
    pub gated_top: Option<GatedEncoderLayer>,
    /// The context encoder's own last layer in gated mode.
    pub context_top: Option<EncoderLayer>,
    pub decoder_layers: Vec<DecoderLayer>,
    pub generator: Linear,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let emb_std = (d as f64).powf(-0.5);
        let src_embed = store.add("src_embed", &[config.src_vocab, d], Init::Normal { std: emb_std }, &mut rng);
        let tgt_embed = store.add("tgt_embed", &[config.tgt_vocab, d], Init::Normal { std: emb_std }, &mut rng);
        let segment_embed = (config.context_mode == ContextMode::Concat)
            .then(|| store.add("segment_embed", &[2, d], Init::Normal { std: emb_std }, &mut rng));
        let stack = match config.context_mode {
            ContextMode::Gated => config.layers - 1,
            _ => config.layers,
        };
        let encoder_layers = (0..stack)
            .map(|i| EncoderLayer::new(&mut store, &format!("enc.{i}"), d, config.d_ff, config.heads, &mut rng))
            .collect();
        let (gated_top, context_top) = if config.context_mode == ContextMode::Gated {
            let top = config.layers - 1;
            (
                Some(GatedEncoderLayer::new(&mut store, &format!("enc.{top}"), d, config.d_ff, config.heads, &mut rng)),
                Some(EncoderLayer::new(&mut store, &format!("ctx.{top}"), d, config.d_ff, config.heads, &mut rng)),
            )
        } else {
            (None, None)
        };
        let decoder_layers = (0..config.layers)
            .map(|i| DecoderLayer::new(&mut store, &format!("dec.{i}"), d, config.d_ff, config.heads, &mut rng))
            .collect();
        let generator = Linear::new(&mut store, "generator", d, config.tgt_vocab, &mut rng);
        Ok(Model {
            config,
            params: store,
            overrides: FusionOverrides::default(),
            src_embed,
            tgt_embed,
            segment_embed,
            encoder_layers,
            gated_top,
            context_top,
            decoder_layers,
            generator,
        })
    }

    /// `√d · embedding + positional encoding (+ segment)`, then dropout.
    pub(crate) fn embed(&self, tape: &mut Tape<T>, table: ParamId, seq: &Padded, segments: Option<&[usize]>) -> Result<Var> {
        let d = self.config.d_model;
        let pe = positional_encoding(seq.width, d, self.config.max_len)?;
        let table = tape.param(&self.params, table);
        let x = tape.embedding(table, &seq.ids, &[seq.batch(), seq.width])?;
        let x = tape.scale(x, T::of((d as f64).sqrt()));
        let pe = tape.constant(&[seq.width, d], pe.into_iter().map(T::of).collect())?;
        let mut x = tape.add(x, pe)?;
        if let (Some(flags), Some(seg)) = (segments, self.segment_embed) {
            let seg = tape.param(&self.params, seg);
            let s = tape.embedding(seg, flags, &[seq.batch(), seq.width])?;
            x = tape.add(x, s)?;
        }
        Ok(tape.dropout(x, self.config.dropout))
    }

    pub(crate) fn run_stack(&self, tape: &mut Tape<T>, layers: &[EncoderLayer], mut x: Var, mask: &Mask<T>) -> Result<(Var, Vec<Var>)> {
        let mut weights = Vec::with_capacity(layers.len());
        for layer in layers {
            let (out, w) = layer.forward(tape, &self.params, x, mask, self.config.dropout)?;
            x = out;
            weights.push(w);
        }
        Ok((x, weights))
    }

    /// Plain Transformer encoder over `source` (baseline path).
    pub fn encode_source(&self, tape: &mut Tape<T>, source: &Padded) -> Result<Encoded> {
        if source.lens.contains(&0) {
            return Err(Error::invalid("cannot encode an empty sequence"));
        }
        let x = self.embed(tape, self.src_embed, source, None)?;
        let mask = source.key_mask(source.width);
        let (memory, self_attention) = self.run_stack(tape, &self.encoder_layers, x, &mask)?;
        Ok(Encoded {
            memory,
            memory_layout: source.clone(),
            self_attention,
            context: None,
        })
    }

    /// Encodes a batch according to the configured context mode.
    pub fn encode_batch(&self, tape: &mut Tape<T>, source: &Padded, context: &Padded) -> Result<Encoded> {
        match self.config.context_mode {
            ContextMode::None => self.encode_source(tape, source),
            ContextMode::Gated => self.context_aware_encode(tape, source, context),
            ContextMode::Concat => self.concat_encode(tape, source, context),
        }
    }

    /// Decoder logits `[batch, target_width, tgt_vocab]`.
    pub fn decode_batch(&self, tape: &mut Tape<T>, enc: &Encoded, target_in: &Padded) -> Result<Var> {
        let mut y = self.embed(tape, self.tgt_embed, target_in, None)?;
        let causal = target_in.causal_mask();
        let memory_mask = enc.memory_layout.key_mask(target_in.width);
        for layer in &self.decoder_layers {
            y = layer.forward(tape, &self.params, y, enc.memory, &causal, &memory_mask, self.config.dropout)?;
        }
        self.generator.forward(tape, &self.params, y)
    }

    /// Mean label-smoothed cross-entropy over non-pad target tokens.
    pub fn loss(&self, tape: &mut Tape<T>, batch: &Batch) -> Result<Var> {
        self.loss_with_smoothing(tape, batch, self.config.label_smoothing)
    }

    pub fn loss_with_smoothing(&self, tape: &mut Tape<T>, batch: &Batch, smoothing: f64) -> Result<Var> {
        let enc = self.encode_batch(tape, &batch.source, &batch.context)?;
        let logits = self.decode_batch(tape, &enc, &batch.target_in)?;
        let rows = batch.len() * batch.target_in.width;
        let flat = tape.reshape(logits, &[rows, self.config.tgt_vocab])?;
        tape.cross_entropy(flat, &batch.target_out, Some(PAD), smoothing)
    }

    /// Encodes one example (`source` and `context` without special tokens).
    pub fn encode(&self, source: &[usize], context: &[usize]) -> Result<EncoderState<T>> {
        if source.is_empty() {
            return Err(Error::invalid("cannot encode an empty source sentence"));
        }
        let src = Padded::from_seqs(&[model_source(source)]);
        let ctx = Padded::from_seqs(&[model_context(context)]);
        let mut tape = Tape::eval();
        let enc = self.encode_batch(&mut tape, &src, &ctx)?;
        Ok(self.detach(&tape, &enc, 0))
    }

    /// Copies one batch row of an encoding off the tape.
    pub fn detach(&self, tape: &Tape<T>, enc: &Encoded, row: usize) -> EncoderState<T> {
        let d = self.config.d_model;
        let width = enc.memory_layout.width;
        let len = enc.memory_layout.lens[row];
        let hidden = tape.values(enc.memory)[row * width * d..(row * width + len) * d].to_vec();
        let crop = |full: &[T], rows: usize, cols: usize, keep_rows: usize, keep_cols: usize| -> Vec<T> {
            let mut out = Vec::with_capacity(keep_rows * keep_cols);
            for i in 0..keep_rows {
                out.extend_from_slice(&full[(row * rows + i) * cols..(row * rows + i) * cols + keep_cols]);
            }
            out
        };
        let self_attention = enc
            .self_attention
            .iter()
            .map(|&w| {
                let avg = head_average(tape, w);
                let s = tape.shape(w)[2];
                crop(&avg, s, s, len.min(s), len.min(s))
            })
            .collect();
        let (context_attention, gate, context_tokens) = match &enc.context {
            Some(trace) => {
                let shape = tape.shape(trace.attention);
                let (s, c) = (shape[2], shape[3]);
                let ctx_len = trace.layout.lens[row];
                let avg = head_average(tape, trace.attention);
                (
                    Some(crop(&avg, s, c, len, ctx_len)),
                    Some(crop(tape.values(trace.gate), s, d, len, d)),
                    trace.layout.row(row).to_vec(),
                )
            }
            None => (None, None, Vec::new()),
        };
        EncoderState {
            hidden,
            len,
            d_model: d,
            self_attention,
            context_attention,
            gate,
            source_tokens: enc.memory_layout.row(row).to_vec(),
            context_tokens,
        }
    }
}

impl Model<f64> {
    /// Finite-difference check of the teacher-forced loss on `batch`.
    pub fn gradient_check(&self, batch: &Batch, step: f64, seed: u64) -> Result<GradCheckReport> {
        finite_difference_check(
            &self.params,
            |tape, store| {
                let mut probe = self.clone();
                probe.params = store.clone();
                probe.loss(tape, batch)
            },
            step,
            seed,
        )
    }
}
