use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::scalar::{gemm, Scalar};
use crate::error::{Error, Result};

/// Additive mask value for blocked attention positions.
pub const MASK_SENTINEL: f64 = -1e9;
/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Node handle on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

/// A dense row-major tensor recorded on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Option<Vec<T>>,
    pub requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }
}

/// Additive attention mask of shape `[batch, rows, cols]` holding `0` for
/// visible positions and [`MASK_SENTINEL`] for blocked ones. It broadcasts
/// over any head axes that sit between the batch axis and the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T> {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> Mask<T> {
    pub fn from_fn(batch: usize, rows: usize, cols: usize, visible: impl Fn(usize, usize, usize) -> bool) -> Self {
        let blocked = T::of(MASK_SENTINEL);
        let mut values = Vec::with_capacity(batch * rows * cols);
        for b in 0..batch {
            for i in 0..rows {
                for j in 0..cols {
                    values.push(if visible(b, i, j) { T::zero() } else { blocked });
                }
            }
        }
        Mask { batch, rows, cols, values }
    }

    pub fn is_visible(&self, b: usize, i: usize, j: usize) -> bool {
        self.values[(b * self.rows + i) * self.cols + j] > T::of(MASK_SENTINEL / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
        shared_b: bool,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        s: T,
    },
    Relu {
        a: usize,
    },
    Sigmoid {
        a: usize,
    },
    Softmax {
        a: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Concat {
        a: usize,
        b: usize,
    },
    Dropout {
        a: usize,
        keep: Vec<T>,
    },
    GatedSum {
        g: usize,
        a: usize,
        b: usize,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        ignore: Option<usize>,
        smoothing: T,
        probs: Vec<T>,
        count: usize,
    },
    SplitHeads {
        a: usize,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    MergeHeads {
        a: usize,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    Reshape {
        a: usize,
    },
    Sum {
        a: usize,
    },
    Mean {
        a: usize,
    },
}

/// Records a forward computation and replays it in reverse to produce
/// gradients. One tape serves one forward/backward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Tensor<T>>,
    ops: Vec<Op<T>>,
    mode: Mode,
    track_grads: bool,
    rng: ChaCha8Rng,
    params: HashMap<ParamId, Var>,
    backward_done: bool,
}

fn suffix_broadcast(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl<T: Scalar> Tape<T> {
    /// Training tape; `seed` drives dropout.
    pub fn train(seed: u64) -> Self {
        Self::build(Mode::Train, true, seed)
    }

    /// Inference tape: dropout is the identity and no gradients are tracked.
    pub fn eval() -> Self {
        Self::build(Mode::Eval, false, 0)
    }

    /// Eval-mode (deterministic) tape that still tracks gradients.
    pub fn eval_with_grads() -> Self {
        Self::build(Mode::Eval, true, 0)
    }

    fn build(mode: Mode, track_grads: bool, seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
            mode,
            track_grads,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: HashMap::new(),
            backward_done: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0]
    }

    pub fn values(&self, v: Var) -> &[T] {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op<T>, inputs: &[usize]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let requires_grad = self.track_grads && inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Tensor {
            shape,
            values,
            grad: None,
            requires_grad,
        });
        self.ops.push(op);
        Var(self.nodes.len() - 1)
    }

    fn check_len(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
        if shape.iter().product::<usize>() != len || shape.is_empty() && len != 1 {
            return Err(Error::Shape {
                op,
                left: shape.to_vec(),
                right: vec![len],
            });
        }
        Ok(())
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, shape: &[usize], values: Vec<T>) -> Result<Var> {
        self.leaf(shape, values, false)
    }

    pub fn leaf(&mut self, shape: &[usize], values: Vec<T>, requires_grad: bool) -> Result<Var> {
        Self::check_len("leaf", shape, values.len())?;
        self.nodes.push(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
            requires_grad: requires_grad && self.track_grads,
        });
        self.ops.push(Op::Leaf);
        Ok(Var(self.nodes.len() - 1))
    }

    /// Brings a stored parameter onto the tape. Repeated requests for the same
    /// parameter return the same node, so all uses accumulate into one gradient.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        self.nodes.push(Tensor {
            shape: p.shape.clone(),
            values: p.value.clone(),
            grad: None,
            requires_grad: self.track_grads,
        });
        self.ops.push(Op::Leaf);
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Adds the gradients of every parameter node into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        for (&id, &v) in &self.params {
            if let Some(g) = &self.nodes[v.0].grad {
                for (dst, src) in store.get_mut(id).grad.iter_mut().zip(g) {
                    *dst += *src;
                }
            }
        }
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool, op: &'static str) -> Result<Var> {
        let sa = self.nodes[a.0].shape.clone();
        let sb = self.nodes[b.0].shape.clone();
        let err = || Error::Shape {
            op,
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let m = sa[sa.len() - 2];
        let k = sa[sa.len() - 1];
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(err());
        }
        let lead = &sa[..sa.len() - 2];
        let batch: usize = lead.iter().product();
        let shared_b = sb.len() == 2;
        if !shared_b && sb[..sb.len() - 2] != *lead {
            return Err(err());
        }
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = &self.nodes[a.0].values;
            let bv = &self.nodes[b.0].values;
            if shared_b {
                gemm(batch * m, k, n, av, false, bv, trans_b, &mut out, false);
            } else {
                for i in 0..batch {
                    gemm(
                        m,
                        k,
                        n,
                        &av[i * m * k..(i + 1) * m * k],
                        false,
                        &bv[i * k * n..(i + 1) * k * n],
                        trans_b,
                        &mut out[i * m * n..(i + 1) * m * n],
                        false,
                    );
                }
            }
        }
        let mut shape = lead.to_vec();
        shape.extend([m, n]);
        Ok(self.push(
            shape,
            out,
            Op::MatMul {
                a: a.0,
                b: b.0,
                batch,
                m,
                k,
                n,
                trans_b,
                shared_b,
            },
            &[a.0, b.0],
        ))
    }

    /// `a · b` with `a: [.., m, k]` and `b: [k, n]` (shared) or `[.., k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, "matmul")
    }

    /// `a · bᵀ` with `a: [.., m, k]` and `b: [n, k]` or `[.., n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true, "matmul_nt")
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<(Vec<usize>, Vec<T>)> {
        let (ta, tb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if !suffix_broadcast(&ta.shape, &tb.shape) {
            return Err(Error::Shape {
                op,
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let nb = tb.values.len().max(1);
        let out = ta
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.values[i % nb]))
            .collect();
        Ok((ta.shape.clone(), out))
    }

    /// Elementwise `a + b`, broadcasting `b` over the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(shape, out, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(shape, out, Op::Sub { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, out) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(shape, out, Op::Mul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = &self.nodes[a.0];
        let out = t.values.iter().map(|&x| x * s).collect();
        let shape = t.shape.clone();
        self.push(shape, out, Op::Scale { a: a.0, s }, &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0];
        let out = t.values.iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let shape = t.shape.clone();
        self.push(shape, out, Op::Relu { a: a.0 }, &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0];
        let out = t.values.iter().map(|&x| sigmoid(x)).collect();
        let shape = t.shape.clone();
        self.push(shape, out, Op::Sigmoid { a: a.0 }, &[a.0])
    }

    /// Softmax over the last axis, after adding an optional mask.
    pub fn softmax(&mut self, a: Var, mask: Option<&Mask<T>>) -> Result<Var> {
        let t = &self.nodes[a.0];
        let cols = t.cols();
        let rows = t.values.len() / cols.max(1);
        // (rows per batch element including heads, mask rows) for mask lookup
        let layout = match mask {
            None => None,
            Some(m) => {
                let heads = rows / (m.batch * m.rows).max(1);
                if m.cols != cols || heads == 0 || heads * m.batch * m.rows != rows || t.shape.first() != Some(&m.batch) {
                    return Err(Error::Shape {
                        op: "softmax",
                        left: t.shape.clone(),
                        right: vec![m.batch, m.rows, m.cols],
                    });
                }
                Some((heads * m.rows, m.rows))
            }
        };
        let sentinel_half = T::of(MASK_SENTINEL / 2.0);
        let mut out = vec![T::zero(); t.values.len()];
        for r in 0..rows {
            let x = &t.values[r * cols..(r + 1) * cols];
            let y = &mut out[r * cols..(r + 1) * cols];
            match (layout, mask) {
                (Some((per_batch, mr)), Some(m)) => {
                    let mi = (r / per_batch) * mr + r % mr;
                    let mrow = &m.values[mi * cols..(mi + 1) * cols];
                    if mrow.iter().all(|&v| v <= sentinel_half) {
                        return Err(Error::AllMasked { op: "softmax", row: r });
                    }
                    for j in 0..cols {
                        y[j] = x[j] + mrow[j];
                    }
                }
                _ => y.copy_from_slice(x),
            }
            let max = y.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in y.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in y.iter_mut() {
                *v /= sum;
            }
        }
        let shape = t.shape.clone();
        Ok(self.push(shape, out, Op::Softmax { a: a.0 }, &[a.0]))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = &self.nodes[x.0];
        let cols = t.cols();
        for v in [gain, bias] {
            if self.nodes[v.0].shape != [cols] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    left: t.shape.clone(),
                    right: self.nodes[v.0].shape.clone(),
                });
            }
        }
        let rows = t.values.len() / cols;
        let (g, b) = (&self.nodes[gain.0].values, &self.nodes[bias.0].values);
        let eps = T::of(LAYER_NORM_EPS);
        let n = T::of(cols as f64);
        let mut out = vec![T::zero(); t.values.len()];
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &t.values[r * cols..(r + 1) * cols];
            let mean = row.iter().cloned().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rstd = T::one() / (var + eps).sqrt();
            for j in 0..cols {
                out[r * cols + j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            means.push(mean);
            rstds.push(rstd);
        }
        let shape = t.shape.clone();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                mean: means,
                rstd: rstds,
            },
            &[x.0, gain.0, bias.0],
        ))
    }

    /// Gathers rows of `table: [vocab, d]`; output shape is `ids_shape ++ [d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Result<Var> {
        let t = &self.nodes[table.0];
        if t.shape.len() != 2 || ids_shape.iter().product::<usize>() != ids.len() {
            return Err(Error::Shape {
                op: "embedding",
                left: t.shape.clone(),
                right: ids_shape.to_vec(),
            });
        }
        let (vocab, d) = (t.shape[0], t.shape[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    size: vocab,
                });
            }
            out.extend_from_slice(&t.values[id * d..(id + 1) * d]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(d);
        Ok(self.push(
            shape,
            out,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (ra, rb) = (ta.shape.len(), tb.shape.len());
        if ra == 0 || ra != rb || ta.shape[..ra - 1] != tb.shape[..rb - 1] {
            return Err(Error::Shape {
                op: "concat",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (na, nb) = (ta.cols(), tb.cols());
        let rows = ta.values.len() / na.max(1);
        let mut out = Vec::with_capacity(ta.values.len() + tb.values.len());
        for r in 0..rows {
            out.extend_from_slice(&ta.values[r * na..(r + 1) * na]);
            out.extend_from_slice(&tb.values[r * nb..(r + 1) * nb]);
        }
        let mut shape = ta.shape.clone();
        shape[ra - 1] = na + nb;
        Ok(self.push(shape, out, Op::Concat { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Inverted dropout. The identity in eval mode or with `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if self.mode == Mode::Eval || rate <= 0.0 {
            return a;
        }
        let scale = T::of(1.0 / (1.0 - rate));
        let len = self.nodes[a.0].values.len();
        let keep: Vec<T> = (0..len)
            .map(|_| if self.rng.random::<f64>() < rate { T::zero() } else { scale })
            .collect();
        let t = &self.nodes[a.0];
        let out = t.values.iter().zip(&keep).map(|(&x, &k)| x * k).collect();
        let shape = t.shape.clone();
        self.push(shape, out, Op::Dropout { a: a.0, keep }, &[a.0])
    }

    /// `g ⊙ a + (1 − g) ⊙ b`, all three of identical shape.
    pub fn gated_sum(&mut self, g: Var, a: Var, b: Var) -> Result<Var> {
        let (tg, ta, tb) = (&self.nodes[g.0], &self.nodes[a.0], &self.nodes[b.0]);
        if tg.shape != ta.shape || ta.shape != tb.shape {
            return Err(Error::Shape {
                op: "gated_sum",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let out = tg
            .values
            .iter()
            .zip(&ta.values)
            .zip(&tb.values)
            .map(|((&g, &x), &y)| g * x + (T::one() - g) * y)
            .collect();
        let shape = ta.shape.clone();
        Ok(self.push(
            shape,
            out,
            Op::GatedSum {
                g: g.0,
                a: a.0,
                b: b.0,
            },
            &[g.0, a.0, b.0],
        ))
    }

    /// Mean token cross-entropy of `logits: [rows, vocab]` against `targets`,
    /// with uniform label smoothing. Rows whose target equals `ignore` do not
    /// contribute.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: Option<usize>, smoothing: f64) -> Result<Var> {
        let t = &self.nodes[logits.0];
        let vocab = t.cols();
        let rows = t.values.len() / vocab.max(1);
        if t.shape.len() != 2 || rows != targets.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: t.shape.clone(),
                right: vec![targets.len()],
            });
        }
        let eps = T::of(smoothing);
        let uniform = eps / T::of(vocab as f64);
        let mut probs = vec![T::zero(); t.values.len()];
        let mut total = T::zero();
        let mut count = 0usize;
        for r in 0..rows {
            let x = &t.values[r * vocab..(r + 1) * vocab];
            let max = x.iter().cloned().fold(T::neg_infinity(), T::max);
            let lse = x.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            for j in 0..vocab {
                probs[r * vocab + j] = (x[j] - lse).exp();
            }
            if Some(targets[r]) == ignore {
                continue;
            }
            if targets[r] >= vocab {
                return Err(Error::Index {
                    op: "cross_entropy",
                    index: targets[r],
                    size: vocab,
                });
            }
            count += 1;
            let mut row_loss = -(T::one() - eps) * (x[targets[r]] - lse);
            if smoothing > 0.0 {
                row_loss -= uniform * x.iter().map(|&v| v - lse).sum::<T>();
            }
            total += row_loss;
        }
        let loss = if count > 0 { total / T::of(count as f64) } else { T::zero() };
        Ok(self.push(
            vec![],
            vec![loss],
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                ignore,
                smoothing: eps,
                probs,
                count,
            },
            &[logits.0],
        ))
    }

    /// `[batch, seq, heads·dk] → [batch, heads, seq, dk]`.
    pub fn split_heads(&mut self, a: Var, heads: usize) -> Result<Var> {
        let t = &self.nodes[a.0];
        if t.shape.len() != 3 || heads == 0 || t.shape[2] % heads != 0 {
            return Err(Error::Shape {
                op: "split_heads",
                left: t.shape.clone(),
                right: vec![heads],
            });
        }
        let (batch, seq, d) = (t.shape[0], t.shape[1], t.shape[2]);
        let dk = d / heads;
        let mut out = vec![T::zero(); t.values.len()];
        for b in 0..batch {
            for s in 0..seq {
                for h in 0..heads {
                    let src = (b * seq + s) * d + h * dk;
                    let dst = ((b * heads + h) * seq + s) * dk;
                    out[dst..dst + dk].copy_from_slice(&t.values[src..src + dk]);
                }
            }
        }
        Ok(self.push(
            vec![batch, heads, seq, dk],
            out,
            Op::SplitHeads { a: a.0, batch, seq, heads },
            &[a.0],
        ))
    }

    /// `[batch, heads, seq, dk] → [batch, seq, heads·dk]`.
    pub fn merge_heads(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0];
        if t.shape.len() != 4 {
            return Err(Error::Shape {
                op: "merge_heads",
                left: t.shape.clone(),
                right: vec![],
            });
        }
        let (batch, heads, seq, dk) = (t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
        let d = heads * dk;
        let mut out = vec![T::zero(); t.values.len()];
        for b in 0..batch {
            for s in 0..seq {
                for h in 0..heads {
                    let dst = (b * seq + s) * d + h * dk;
                    let src = ((b * heads + h) * seq + s) * dk;
                    out[dst..dst + dk].copy_from_slice(&t.values[src..src + dk]);
                }
            }
        }
        Ok(self.push(
            vec![batch, seq, d],
            out,
            Op::MergeHeads { a: a.0, batch, seq, heads },
            &[a.0],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = &self.nodes[a.0];
        if shape.iter().product::<usize>() != t.values.len() {
            return Err(Error::Shape {
                op: "reshape",
                left: t.shape.clone(),
                right: shape.to_vec(),
            });
        }
        let out = t.values.clone();
        Ok(self.push(shape.to_vec(), out, Op::Reshape { a: a.0 }, &[a.0]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].values.iter().cloned().sum();
        self.push(vec![], vec![s], Op::Sum { a: a.0 }, &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0];
        let s = t.values.iter().cloned().sum::<T>() / T::of(t.values.len().max(1) as f64);
        self.push(vec![], vec![s], Op::Mean { a: a.0 }, &[a.0])
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate into every
    /// reachable node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<T>>> = self.nodes.iter_mut().map(|n| n.grad.take()).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backward_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let slot = |grads: &mut [Option<Vec<T>>], j: usize| -> bool {
            if !nodes[j].requires_grad {
                return false;
            }
            if grads[j].is_none() {
                grads[j] = Some(vec![T::zero(); nodes[j].values.len()]);
            }
            true
        };
        let y = &nodes[i].values;
        match &self.ops[i] {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                trans_b,
                shared_b,
            } => {
                let (av, bv) = (&nodes[a].values, &nodes[b].values);
                if slot(grads, a) {
                    let ga = grads[a].as_mut().unwrap();
                    if shared_b {
                        // dA = dC · op(B)ᵀ
                        gemm(batch * m, n, k, gy, false, bv, !trans_b, ga, true);
                    } else {
                        for t in 0..batch {
                            gemm(
                                m,
                                n,
                                k,
                                &gy[t * m * n..(t + 1) * m * n],
                                false,
                                &bv[t * k * n..(t + 1) * k * n],
                                !trans_b,
                                &mut ga[t * m * k..(t + 1) * m * k],
                                true,
                            );
                        }
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b].as_mut().unwrap();
                    let reps = if shared_b { 1 } else { batch };
                    let rows = if shared_b { batch * m } else { m };
                    for t in 0..reps {
                        let g_blk = &gy[t * rows * n..(t + 1) * rows * n];
                        let a_blk = &av[t * rows * k..(t + 1) * rows * k];
                        let out = &mut gb[t * k * n..(t + 1) * k * n];
                        if trans_b {
                            // B is n×k: dB = dCᵀ · A
                            gemm(n, rows, k, g_blk, true, a_blk, false, out, true);
                        } else {
                            // dB = Aᵀ · dC
                            gemm(k, rows, n, a_blk, true, g_blk, false, out, true);
                        }
                    }
                }
            }
            &Op::Add { a, b } | &Op::Sub { a, b } => {
                let negate = matches!(self.ops[i], Op::Sub { .. });
                if slot(grads, a) {
                    for (d, &g) in grads[a].as_mut().unwrap().iter_mut().zip(gy) {
                        *d += g;
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b].as_mut().unwrap();
                    let nb = gb.len();
                    for (idx, &g) in gy.iter().enumerate() {
                        if negate {
                            gb[idx % nb] -= g;
                        } else {
                            gb[idx % nb] += g;
                        }
                    }
                }
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (&nodes[a].values, &nodes[b].values);
                let nb = bv.len();
                if slot(grads, a) {
                    let ga = grads[a].as_mut().unwrap();
                    for (idx, &g) in gy.iter().enumerate() {
                        ga[idx] += g * bv[idx % nb];
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b].as_mut().unwrap();
                    for (idx, &g) in gy.iter().enumerate() {
                        gb[idx % nb] += g * av[idx];
                    }
                }
            }
            &Op::Scale { a, s } => {
                if slot(grads, a) {
                    for (d, &g) in grads[a].as_mut().unwrap().iter_mut().zip(gy) {
                        *d += g * s;
                    }
                }
            }
            &Op::Relu { a } => {
                if slot(grads, a) {
                    let av = &nodes[a].values;
                    for ((d, &g), &x) in grads[a].as_mut().unwrap().iter_mut().zip(gy).zip(av) {
                        if x > T::zero() {
                            *d += g;
                        }
                    }
                }
            }
            &Op::Sigmoid { a } => {
                if slot(grads, a) {
                    for ((d, &g), &s) in grads[a].as_mut().unwrap().iter_mut().zip(gy).zip(y) {
                        *d += g * s * (T::one() - s);
                    }
                }
            }
            &Op::Softmax { a } => {
                if slot(grads, a) {
                    let cols = *nodes[i].shape.last().unwrap_or(&1);
                    let ga = grads[a].as_mut().unwrap();
                    for r in 0..y.len() / cols.max(1) {
                        let ys = &y[r * cols..(r + 1) * cols];
                        let gs = &gy[r * cols..(r + 1) * cols];
                        let dot: T = ys.iter().zip(gs).map(|(&p, &g)| p * g).sum();
                        for j in 0..cols {
                            ga[r * cols + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let xv = &nodes[x].values;
                let gv = &nodes[gain].values;
                let cols = gv.len();
                let rows = xv.len() / cols;
                let n = T::of(cols as f64);
                let xhat = |r: usize, j: usize| (xv[r * cols + j] - mean[r]) * rstd[r];
                if slot(grads, gain) {
                    let gg = grads[gain].as_mut().unwrap();
                    for r in 0..rows {
                        for j in 0..cols {
                            gg[j] += gy[r * cols + j] * xhat(r, j);
                        }
                    }
                }
                if slot(grads, bias) {
                    let gb = grads[bias].as_mut().unwrap();
                    for r in 0..rows {
                        for j in 0..cols {
                            gb[j] += gy[r * cols + j];
                        }
                    }
                }
                if slot(grads, x) {
                    let gx = grads[x].as_mut().unwrap();
                    for r in 0..rows {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..cols {
                            let d = gy[r * cols + j] * gv[j];
                            sum_d += d;
                            sum_dx += d * xhat(r, j);
                        }
                        let (md, mdx) = (sum_d / n, sum_dx / n);
                        for j in 0..cols {
                            let d = gy[r * cols + j] * gv[j];
                            gx[r * cols + j] += rstd[r] * (d - md - xhat(r, j) * mdx);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                if slot(grads, table) {
                    let d = nodes[table].shape[1];
                    let gt = grads[table].as_mut().unwrap();
                    for (p, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += gy[p * d + j];
                        }
                    }
                }
            }
            &Op::Concat { a, b } => {
                let na = *nodes[a].shape.last().unwrap();
                let nb = *nodes[b].shape.last().unwrap();
                let rows = nodes[a].values.len() / na.max(1);
                if slot(grads, a) {
                    let ga = grads[a].as_mut().unwrap();
                    for r in 0..rows {
                        for j in 0..na {
                            ga[r * na + j] += gy[r * (na + nb) + j];
                        }
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b].as_mut().unwrap();
                    for r in 0..rows {
                        for j in 0..nb {
                            gb[r * nb + j] += gy[r * (na + nb) + na + j];
                        }
                    }
                }
            }
            Op::Dropout { a, keep } => {
                let a = *a;
                if slot(grads, a) {
                    for ((d, &g), &k) in grads[a].as_mut().unwrap().iter_mut().zip(gy).zip(keep) {
                        *d += g * k;
                    }
                }
            }
            &Op::GatedSum { g, a, b } => {
                let (gv, av, bv) = (&nodes[g].values, &nodes[a].values, &nodes[b].values);
                if slot(grads, g) {
                    let gg = grads[g].as_mut().unwrap();
                    for idx in 0..gy.len() {
                        gg[idx] += gy[idx] * (av[idx] - bv[idx]);
                    }
                }
                if slot(grads, a) {
                    let ga = grads[a].as_mut().unwrap();
                    for idx in 0..gy.len() {
                        ga[idx] += gy[idx] * gv[idx];
                    }
                }
                if slot(grads, b) {
                    let gb = grads[b].as_mut().unwrap();
                    for idx in 0..gy.len() {
                        gb[idx] += gy[idx] * (T::one() - gv[idx]);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
                smoothing,
                probs,
                count,
            } => {
                let logits = *logits;
                if *count > 0 && slot(grads, logits) {
                    let vocab = *nodes[logits].shape.last().unwrap();
                    let scale = gy[0] / T::of(*count as f64);
                    let uniform = *smoothing / T::of(vocab as f64);
                    let gl = grads[logits].as_mut().unwrap();
                    for (r, &t) in targets.iter().enumerate() {
                        if Some(t) == *ignore {
                            continue;
                        }
                        for j in 0..vocab {
                            let mut q = uniform;
                            if j == t {
                                q += T::one() - *smoothing;
                            }
                            gl[r * vocab + j] += scale * (probs[r * vocab + j] - q);
                        }
                    }
                }
            }
            &Op::SplitHeads { a, batch, seq, heads } => {
                if slot(grads, a) {
                    let d = *nodes[a].shape.last().unwrap();
                    let dk = d / heads;
                    let ga = grads[a].as_mut().unwrap();
                    for b in 0..batch {
                        for s in 0..seq {
                            for h in 0..heads {
                                let dst = (b * seq + s) * d + h * dk;
                                let src = ((b * heads + h) * seq + s) * dk;
                                for j in 0..dk {
                                    ga[dst + j] += gy[src + j];
                                }
                            }
                        }
                    }
                }
            }
            &Op::MergeHeads { a, batch, seq, heads } => {
                if slot(grads, a) {
                    let dk = *nodes[a].shape.last().unwrap();
                    let d = heads * dk;
                    let ga = grads[a].as_mut().unwrap();
                    for b in 0..batch {
                        for s in 0..seq {
                            for h in 0..heads {
                                let src = (b * seq + s) * d + h * dk;
                                let dst = ((b * heads + h) * seq + s) * dk;
                                for j in 0..dk {
                                    ga[dst + j] += gy[src + j];
                                }
                            }
                        }
                    }
                }
            }
            &Op::Reshape { a } => {
                if slot(grads, a) {
                    for (d, &g) in grads[a].as_mut().unwrap().iter_mut().zip(gy) {
                        *d += g;
                    }
                }
            }
            &Op::Sum { a } => {
                if slot(grads, a) {
                    for d in grads[a].as_mut().unwrap().iter_mut() {
                        *d += gy[0];
                    }
                }
            }
            &Op::Mean { a } => {
                if slot(grads, a) {
                    let n = T::of(nodes[a].values.len() as f64);
                    for d in grads[a].as_mut().unwrap().iter_mut() {
                        *d += gy[0] / n;
                    }
                }
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
