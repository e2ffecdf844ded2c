use rand::Rng;

use crate::autodiff::{Init, Mask, ParamId, ParamStore, Scalar, Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: store.add(
                format!("{name}.w"),
                &[d_in, d_out],
                Init::Xavier {
                    fan_in: d_in,
                    fan_out: d_out,
                },
                rng,
            ),
            bias: store.add(format!("{name}.b"), &[d_out], Init::Zeros, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul(x, w)?;
        tape.add(h, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), &[d], Init::Ones, rng),
            bias: store.add(format!("{name}.bias"), &[d], Init::Zeros, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        tape.layer_norm(x, g, b)
    }
}

/// Result of one multi-head attention call.
#[derive(Debug, Clone, Copy)]
pub struct Attended {
    /// `[batch, queries, d_model]`
    pub output: Var,
    /// Per-head weights `[batch, heads, queries, keys]`.
    pub weights: Var,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, heads: usize, rng: &mut impl Rng) -> Self {
        MultiHeadAttention {
            heads,
            query: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            key: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            value: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            output: Linear::new(store, &format!("{name}.o"), d_model, d_model, rng),
        }
    }

    /// Scaled dot-product attention per head with scale `(d_model/h)^-0.5`,
    /// heads concatenated and projected.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        queries: Var,
        keys_values: Var,
        mask: &Mask<T>,
    ) -> Result<Attended> {
        let q = self.query.forward(tape, store, queries)?;
        let k = self.key.forward(tape, store, keys_values)?;
        let v = self.value.forward(tape, store, keys_values)?;
        let q = tape.split_heads(q, self.heads)?;
        let k = tape.split_heads(k, self.heads)?;
        let v = tape.split_heads(v, self.heads)?;
        let head_dim = tape.shape(q)[3];
        let scores = tape.matmul_nt(q, k)?;
        let scores = tape.scale(scores, T::of((head_dim as f64).powf(-0.5)));
        let weights = tape.softmax(scores, Some(mask))?;
        let ctx = tape.matmul(weights, v)?;
        let merged = tape.merge_heads(ctx)?;
        let output = self.output.forward(tape, store, merged)?;
        Ok(Attended { output, weights })
    }
}

/// Mean over heads of `[batch, heads, q, k]` weights, returned as `[batch, q, k]`.
pub fn head_average<T: Scalar>(tape: &Tape<T>, weights: Var) -> Vec<T> {
    let shape = tape.shape(weights);
    let (batch, heads, q, k) = (shape[0], shape[1], shape[2], shape[3]);
    let vals = tape.values(weights);
    let mut out = vec![T::zero(); batch * q * k];
    let inv = T::one() / T::of(heads as f64);
    for b in 0..batch {
        for h in 0..heads {
            let src = &vals[(b * heads + h) * q * k..(b * heads + h + 1) * q * k];
            let dst = &mut out[b * q * k..(b + 1) * q * k];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s * inv;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, d_ff: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), d_model, d_ff, rng),
            outer: Linear::new(store, &format!("{name}.outer"), d_ff, d_model, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.inner.forward(tape, store, x)?;
        let h = tape.relu(h);
        self.outer.forward(tape, store, h)
    }
}

/// Post-norm residual block: `norm(x + dropout(sublayer))`.
pub fn residual_norm<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    norm: &LayerNorm,
    x: Var,
    sublayer: Var,
    dropout: f64,
) -> Result<Var> {
    let s = tape.dropout(sublayer, dropout);
    let sum = tape.add(x, s)?;
    norm.forward(tape, store, sum)
}

/// Self-attention and feed-forward sublayers.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, d_ff: usize, heads: usize, rng: &mut impl Rng) -> Self {
        EncoderLayer {
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d_model, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model, rng),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d_model, d_ff, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model, rng),
        }
    }

    /// Returns the layer output and its self-attention weights.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        mask: &Mask<T>,
        dropout: f64,
    ) -> Result<(Var, Var)> {
        let att = self.self_attn.forward(tape, store, x, x, mask)?;
        let h = residual_norm(tape, store, &self.norm1, x, att.output, dropout)?;
        let f = self.ffn.forward(tape, store, h)?;
        let out = residual_norm(tape, store, &self.norm2, h, f, dropout)?;
        Ok((out, att.weights))
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_model: usize, d_ff: usize, heads: usize, rng: &mut impl Rng) -> Self {
        DecoderLayer {
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d_model, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model, rng),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), d_model, heads, rng),
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
        memory: Var,
        causal_mask: &Mask<T>,
        memory_mask: &Mask<T>,
        dropout: f64,
    ) -> Result<Var> {
        let att = self.self_attn.forward(tape, store, x, x, causal_mask)?;
        let h = residual_norm(tape, store, &self.norm1, x, att.output, dropout)?;
        let cross = self.cross_attn.forward(tape, store, h, memory, memory_mask)?;
        let h = residual_norm(tape, store, &self.norm2, h, cross.output, dropout)?;
        let f = self.ffn.forward(tape, store, h)?;
        residual_norm(tape, store, &self.norm3, h, f, dropout)
    }
}

/// Sinusoidal table, `length × d_model`, row-major.
pub fn sinusoidal_table(length: usize, d_model: usize) -> Vec<f64> {
    let mut table = vec![0.0; length * d_model];
    for pos in 0..length {
        for i in (0..d_model).step_by(2) {
            let angle = pos as f64 / 10000f64.powf(i as f64 / d_model as f64);
            table[pos * d_model + i] = angle.sin();
            if i + 1 < d_model {
                table[pos * d_model + i + 1] = angle.cos();
            }
        }
    }
    table
}
