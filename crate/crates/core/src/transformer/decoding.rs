use super::batch::{model_context, model_source, Padded};
use super::model::{EncoderState, Model};
use crate::autodiff::{Scalar, Tape};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::special::{BOS, EOS};

pub const DEFAULT_BEAM_WIDTH: usize = 4;
pub const DEFAULT_LENGTH_ALPHA: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Output ids without `<bos>`/`<eos>`.
    pub ids: Vec<usize>,
    /// Length-normalized log-probability.
    pub score: f64,
    /// No `<eos>` was produced within `max_out` steps.
    pub truncated: bool,
}

/// `((5 + len) / 6)^alpha`
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

pub fn normalized_score(log_prob: f64, len: usize, alpha: f64) -> f64 {
    log_prob / length_penalty(len, alpha)
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v - lse).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    /// Log-probabilities of the next token after each prefix. All prefixes
    /// share the encoder state and have equal length.
    fn next_log_probs(&self, state: &EncoderState<T>, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let width = prefixes[0].len();
        if width > self.config.max_len {
            return Err(Error::invalid(format!(
                "target prefix length {width} exceeds max_len {}",
                self.config.max_len
            )));
        }
        let n = prefixes.len();
        let d = self.config.d_model;
        let mut tape = Tape::eval();
        let mut mem = Vec::with_capacity(n * state.hidden.len());
        for _ in 0..n {
            mem.extend_from_slice(&state.hidden);
        }
        let memory = tape.constant(&[n, state.len, d], mem)?;
        let enc = super::model::Encoded {
            memory,
            memory_layout: Padded {
                ids: vec![0; n * state.len],
                lens: vec![state.len; n],
                width: state.len,
            },
            self_attention: Vec::new(),
            context: None,
        };
        let target = Padded::from_seqs(prefixes);
        let logits = self.decode_batch(&mut tape, &enc, &target)?;
        let v = self.config.tgt_vocab;
        let vals = tape.values(logits);
        Ok((0..n)
            .map(|b| {
                let row: Vec<f64> = vals[(b * width + width - 1) * v..(b * width + width) * v]
                    .iter()
                    .map(|x| x.as_f64())
                    .collect();
                log_softmax(&row)
            })
            .collect())
    }

    /// Next-token distribution after `prefix` (which starts with `<bos>`).
    pub fn decode_step(&self, prefix: &[usize], state: &EncoderState<T>) -> Result<Vec<T>> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::invalid("target prefix must start with <bos>"));
        }
        let lp = self.next_log_probs(state, &[prefix.to_vec()])?;
        Ok(lp[0].iter().map(|&x| T::of(x.exp())).collect())
    }

    fn greedy_from_state(&self, state: &EncoderState<T>, max_out: usize) -> Result<Translation> {
        let mut prefix = vec![BOS];
        let mut log_prob = 0.0;
        for _ in 0..max_out {
            let lp = self.next_log_probs(state, &[prefix.clone()])?;
            let tok = argmax(&lp[0]);
            log_prob += lp[0][tok];
            prefix.push(tok);
            if tok == EOS {
                let len = prefix.len() - 1;
                prefix.pop();
                prefix.remove(0);
                return Ok(Translation {
                    ids: prefix,
                    score: normalized_score(log_prob, len, DEFAULT_LENGTH_ALPHA),
                    truncated: false,
                });
            }
        }
        let len = prefix.len() - 1;
        prefix.remove(0);
        Ok(Translation {
            ids: prefix,
            score: normalized_score(log_prob, len, DEFAULT_LENGTH_ALPHA),
            truncated: true,
        })
    }

    fn beam_from_state(&self, state: &EncoderState<T>, width: usize, max_out: usize) -> Result<Translation> {
        let alpha = DEFAULT_LENGTH_ALPHA;
        let mut finished: Vec<Translation> = Vec::new();
        if width > 1 {
            // the width-1 path is always a candidate
            finished.push(self.greedy_from_state(state, max_out)?);
        }
        let seeded = finished.len();
        let mut live: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
        for _ in 0..max_out {
            let prefixes: Vec<Vec<usize>> = live.iter().map(|(p, _)| p.clone()).collect();
            let lps = self.next_log_probs(state, &prefixes)?;
            let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * self.config.tgt_vocab);
            for (h, lp) in lps.iter().enumerate() {
                for (tok, &l) in lp.iter().enumerate() {
                    cands.push((live[h].1 + l, h, tok));
                }
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut next = Vec::with_capacity(width);
            for &(lp, h, tok) in cands.iter().take(width) {
                let mut p = live[h].0.clone();
                if tok == EOS {
                    let len = p.len();
                    p.remove(0);
                    finished.push(Translation {
                        ids: p,
                        score: normalized_score(lp, len, alpha),
                        truncated: false,
                    });
                } else {
                    p.push(tok);
                    next.push((p, lp));
                }
            }
            live = next;
            if live.is_empty() || finished.len() - seeded >= width {
                live.clear();
                break;
            }
        }
        for (mut p, lp) in live {
            let len = p.len() - 1;
            p.remove(0);
            finished.push(Translation {
                ids: p,
                score: normalized_score(lp, len, alpha),
                truncated: true,
            });
        }
        let mut best = 0;
        for (i, t) in finished.iter().enumerate() {
            if t.score > finished[best].score {
                best = i;
            }
        }
        Ok(finished.swap_remove(best))
    }

    /// Translates one sentence. `Beam(1)` is equivalent to `Greedy`.
    pub fn translate(&self, source: &[usize], context: &[usize], mode: DecodeMode, max_out: usize) -> Result<Translation> {
        let state = self.encode(source, context)?;
        match mode {
            DecodeMode::Greedy => self.greedy_from_state(&state, max_out),
            DecodeMode::Beam(0) => Err(Error::invalid("beam width must be at least 1")),
            DecodeMode::Beam(w) => self.beam_from_state(&state, w, max_out),
        }
    }

    /// Batched greedy decoding; equivalent to calling [`Model::translate`] with
    /// [`DecodeMode::Greedy`] on each example.
    pub fn translate_greedy_batch(&self, examples: &[&Example], max_out: usize) -> Result<Vec<Translation>> {
        if examples.is_empty() {
            return Ok(Vec::new());
        }
        let n = examples.len();
        let src: Vec<Vec<usize>> = examples.iter().map(|e| model_source(&e.source_ids)).collect();
        let ctx: Vec<Vec<usize>> = examples.iter().map(|e| model_context(&e.context_ids)).collect();
        let (src, ctx) = (Padded::from_seqs(&src), Padded::from_seqs(&ctx));
        let mut tape = Tape::eval();
        let enc = self.encode_batch(&mut tape, &src, &ctx)?;
        let d = self.config.d_model;
        let memory_vals = tape.values(enc.memory).to_vec();
        let layout = enc.memory_layout.clone();
        drop(tape);

        let mut prefixes: Vec<Vec<usize>> = vec![vec![BOS]; n];
        let mut log_probs = vec![0.0; n];
        let mut done = vec![false; n];
        for _ in 0..max_out {
            if done.iter().all(|&x| x) {
                break;
            }
            let width = prefixes[0].len();
            let mut tape = Tape::eval();
            let memory = tape.constant(&[n, layout.width, d], memory_vals.clone())?;
            let enc = super::model::Encoded {
                memory,
                memory_layout: layout.clone(),
                self_attention: Vec::new(),
                context: None,
            };
            let target = Padded::from_seqs(&prefixes);
            let logits = self.decode_batch(&mut tape, &enc, &target)?;
            let v = self.config.tgt_vocab;
            let vals = tape.values(logits);
            for b in 0..n {
                if done[b] {
                    // keep widths equal; the padding token is never read back
                    prefixes[b].push(EOS);
                    continue;
                }
                let row: Vec<f64> = vals[(b * width + width - 1) * v..(b * width + width) * v]
                    .iter()
                    .map(|x| x.as_f64())
                    .collect();
                let lp = log_softmax(&row);
                let tok = argmax(&lp);
                log_probs[b] += lp[tok];
                prefixes[b].push(tok);
                if tok == EOS {
                    done[b] = true;
                }
            }
        }
        Ok(prefixes
            .into_iter()
            .zip(log_probs)
            .zip(done)
            .map(|((p, lp), finished)| {
                let gen: Vec<usize> = p[1..].to_vec();
                let end = gen.iter().position(|&t| t == EOS);
                let (ids, len) = match end {
                    Some(e) => (gen[..e].to_vec(), e + 1),
                    None => (gen.clone(), gen.len()),
                };
                Translation {
                    ids,
                    score: normalized_score(lp, len, DEFAULT_LENGTH_ALPHA),
                    truncated: !finished,
                }
            })
            .collect())
    }
}
