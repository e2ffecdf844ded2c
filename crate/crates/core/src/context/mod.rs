//! Context-aware source encoding.
//!
//! The context sentence is encoded by a stack whose first N−1 layers are the
//! source encoder's own layers (same [`ParamId`]s, hence the same storage)
//! followed by one unshared layer. The `<bos>` role token marks context
//! inputs. The source encoder's last layer attends both to itself and to the
//! context encoder output, and a sigmoid gate mixes the two results:
//!
//! ```text
//! g = σ(W_g [c_s ; c_c] + b_g)
//! c = g ⊙ c_s + (1 − g) ⊙ c_c
//! ```
//!
//! The concatenation baseline lives here too: a plain encoder over
//! `[context ; source]` with a learned two-row segment embedding.

mod dump;

use rand::Rng;

pub use dump::{attention_records, dump_attention, read_attention_dump, AttentionDumpWriter};

use crate::autodiff::{Init, Mask, ParamId, ParamStore, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::transformer::layers::{residual_norm, FeedForward, LayerNorm, MultiHeadAttention};
use crate::transformer::{ContextTrace, Encoded, Model, Padded};

#[derive(Debug, Clone)]
pub struct GateParams {
    /// `2·d_model × d_model`
    pub weight: ParamId,
    /// `d_model`
    pub bias: ParamId,
}

impl GateParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, rng: &mut impl Rng) -> Self {
        GateParams {
            weight: store.add(
                format!("{name}.w"),
                &[2 * d_model, d_model],
                Init::Xavier {
                    fan_in: 2 * d_model,
                    fan_out: d_model,
                },
                rng,
            ),
            bias: store.add(format!("{name}.b"), &[d_model], Init::Zeros, rng),
        }
    }
}

/// Test-only switches on the fusion point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FusionOverrides {
    /// Replace every gate value with this constant.
    pub force_gate: Option<f64>,
    /// Replace the context-attention output with zeros.
    pub zero_context: bool,
}

/// Computes the gate from both branches and mixes them. Returns `(c, g)`.
pub fn gated_fusion<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    gate: &GateParams,
    self_part: Var,
    context_part: Var,
) -> Result<(Var, Var)> {
    if tape.shape(self_part) != tape.shape(context_part) {
        return Err(Error::Shape {
            op: "gated_fusion",
            left: tape.shape(self_part).to_vec(),
            right: tape.shape(context_part).to_vec(),
        });
    }
    let both = tape.concat(self_part, context_part)?;
    let w = tape.param(store, gate.weight);
    let b = tape.param(store, gate.bias);
    let z = tape.matmul(both, w)?;
    let z = tape.add(z, b)?;
    let g = tape.sigmoid(z);
    let c = tape.gated_sum(g, self_part, context_part)?;
    Ok((c, g))
}

/// Outputs of one [`GatedEncoderLayer`] call.
#[derive(Debug, Clone, Copy)]
pub struct GatedLayerOutput {
    pub output: Var,
    pub self_weights: Var,
    pub context_weights: Var,
    pub gate: Var,
    pub self_part: Var,
    pub context_part: Var,
    pub fused: Var,
}

/// Last source-encoder layer: self-attention (residual + norm), context
/// attention fused by the gate (norm), feed-forward (residual + norm).
#[derive(Debug, Clone)]
pub struct GatedEncoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub context_attn: MultiHeadAttention,
    pub gate: GateParams,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl GatedEncoderLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, d_ff: usize, heads: usize, rng: &mut impl Rng) -> Self {
        GatedEncoderLayer {
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d_model, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model, rng),
            context_attn: MultiHeadAttention::new(store, &format!("{name}.context_attn"), d_model, heads, rng),
            gate: GateParams::new(store, &format!("{name}.gate"), d_model, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model, rng),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d_model, d_ff, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d_model, rng),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        self_mask: &Mask<T>,
        context: Var,
        context_mask: &Mask<T>,
        dropout: f64,
        overrides: FusionOverrides,
    ) -> Result<GatedLayerOutput> {
        let sa = self.self_attn.forward(tape, store, x, x, self_mask)?;
        let self_part = residual_norm(tape, store, &self.norm1, x, sa.output, dropout)?;
        let ca = self.context_attn.forward(tape, store, self_part, context, context_mask)?;
        let context_part = if overrides.zero_context {
            let n = tape.values(ca.output).len();
            let shape = tape.shape(ca.output).to_vec();
            tape.constant(&shape, vec![T::zero(); n])?
        } else {
            tape.dropout(ca.output, dropout)
        };
        let (fused, gate) = match overrides.force_gate {
            None => gated_fusion(tape, store, &self.gate, self_part, context_part)?,
            Some(v) => {
                let n = tape.values(self_part).len();
                let shape = tape.shape(self_part).to_vec();
                let g = tape.constant(&shape, vec![T::of(v); n])?;
                (tape.gated_sum(g, self_part, context_part)?, g)
            }
        };
        let h = self.norm2.forward(tape, store, fused)?;
        let f = self.ffn.forward(tape, store, h)?;
        let output = residual_norm(tape, store, &self.norm3, h, f, dropout)?;
        Ok(GatedLayerOutput {
            output,
            self_weights: sa.weights,
            context_weights: ca.weights,
            gate,
            self_part,
            context_part,
            fused,
        })
    }

    /// The same layer with the context branch removed: self-attention
    /// sublayer, the fusion-point norm, then the feed-forward sublayer.
    pub fn forward_self_only<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        self_mask: &Mask<T>,
        dropout: f64,
    ) -> Result<Var> {
        let sa = self.self_attn.forward(tape, store, x, x, self_mask)?;
        let s = residual_norm(tape, store, &self.norm1, x, sa.output, dropout)?;
        let h = self.norm2.forward(tape, store, s)?;
        let f = self.ffn.forward(tape, store, h)?;
        residual_norm(tape, store, &self.norm3, h, f, dropout)
    }
}

/// Segment flags for `[context ; source]`: 0 for context positions, 1 for source.
pub fn concat_flags(context_len: usize, source_len: usize) -> Vec<usize> {
    let mut flags = vec![0; context_len];
    flags.extend(std::iter::repeat_n(1, source_len));
    flags
}

impl<T: Scalar> Model<T> {
    fn gated_parts(&self) -> Result<(&GatedEncoderLayer, &crate::transformer::layers::EncoderLayer)> {
        match (&self.gated_top, &self.context_top) {
            (Some(g), Some(c)) => Ok((g, c)),
            _ => Err(Error::config("model was not built with a gated context encoder")),
        }
    }

    /// Runs the context encoder over `<bos> … <eos>` sequences. Returns the
    /// final hidden sequence `[batch, ctx, d]`.
    pub fn encode_context(&self, tape: &mut Tape<T>, context: &Padded) -> Result<Var> {
        let (_, top) = self.gated_parts()?;
        if context.lens.contains(&0) {
            return Err(Error::invalid("context sequence is missing its role token"));
        }
        let x = self.embed(tape, self.src_embed, context, None)?;
        let mask = context.key_mask(context.width);
        let (h, _) = self.run_stack(tape, &self.encoder_layers, x, &mask)?;
        let (out, _) = top.forward(tape, &self.params, h, &mask, self.config.dropout)?;
        Ok(out)
    }

    /// Source layers 1..N−1 followed by the gated last layer.
    pub fn context_aware_encode(&self, tape: &mut Tape<T>, source: &Padded, context: &Padded) -> Result<Encoded> {
        let (gated, _) = self.gated_parts()?;
        if source.lens.contains(&0) {
            return Err(Error::invalid("cannot encode an empty source sequence"));
        }
        if source.batch() != context.batch() {
            return Err(Error::Shape {
                op: "context_aware_encode",
                left: vec![source.batch()],
                right: vec![context.batch()],
            });
        }
        let ctx_hidden = self.encode_context(tape, context)?;
        let x = self.embed(tape, self.src_embed, source, None)?;
        let self_mask = source.key_mask(source.width);
        let (h, mut self_attention) = self.run_stack(tape, &self.encoder_layers, x, &self_mask)?;
        let ctx_mask = context.key_mask(source.width);
        let out = gated.forward(
            tape,
            &self.params,
            h,
            &self_mask,
            ctx_hidden,
            &ctx_mask,
            self.config.dropout,
            self.overrides,
        )?;
        self_attention.push(out.self_weights);
        Ok(Encoded {
            memory: out.output,
            memory_layout: source.clone(),
            self_attention,
            context: Some(ContextTrace {
                layout: context.clone(),
                hidden: ctx_hidden,
                attention: out.context_weights,
                gate: out.gate,
                self_part: out.self_part,
                context_part: out.context_part,
                fused: out.fused,
            }),
        })
    }

    /// Reference encoder for the bottleneck property: identical to the gated
    /// path except that the last layer has no context branch.
    pub fn encode_without_context_branch(&self, tape: &mut Tape<T>, source: &Padded) -> Result<Var> {
        let (gated, _) = self.gated_parts()?;
        let x = self.embed(tape, self.src_embed, source, None)?;
        let mask = source.key_mask(source.width);
        let (h, _) = self.run_stack(tape, &self.encoder_layers, x, &mask)?;
        gated.forward_self_only(tape, &self.params, h, &mask, self.config.dropout)
    }

    /// Standard encoder over `[context ; source]` with segment flags.
    pub fn concat_encode(&self, tape: &mut Tape<T>, source: &Padded, context: &Padded) -> Result<Encoded> {
        let mut seqs = Vec::with_capacity(source.batch());
        let mut flags = Vec::with_capacity(source.batch());
        for b in 0..source.batch() {
            let (c, s) = (context.row(b), source.row(b));
            if c.len() + s.len() > self.config.max_len {
                return Err(Error::invalid(format!(
                    "concatenated input too long: context {} + source {} > max_len {}",
                    c.len(),
                    s.len(),
                    self.config.max_len
                )));
            }
            let mut joined = c.to_vec();
            joined.extend_from_slice(s);
            seqs.push(joined);
            flags.push(concat_flags(c.len(), s.len()));
        }
        let joined = Padded::from_seqs(&seqs);
        let mut flat_flags = Vec::with_capacity(joined.ids.len());
        for f in &flags {
            flat_flags.extend_from_slice(f);
            flat_flags.extend(std::iter::repeat_n(1, joined.width - f.len()));
        }
        let x = self.embed(tape, self.src_embed, &joined, Some(&flat_flags))?;
        let mask = joined.key_mask(joined.width);
        let (memory, self_attention) = self.run_stack(tape, &self.encoder_layers, x, &mask)?;
        Ok(Encoded {
            memory,
            memory_layout: joined,
            self_attention,
            context: None,
        })
    }
}

#[cfg(test)]
mod tests;
