use crate::autodiff::{Mask, Scalar};
use crate::data::Example;
use crate::error::{Error, Result};
use crate::special::{BOS, EOS, PAD};

/// Right-padded id sequences, `batch × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub ids: Vec<usize>,
    pub lens: Vec<usize>,
    pub width: usize,
}

impl Padded {
    pub fn from_seqs<S: AsRef<[usize]>>(seqs: &[S]) -> Self {
        let width = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * width);
        let mut lens = Vec::with_capacity(seqs.len());
        for s in seqs {
            let s = s.as_ref();
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(PAD, width - s.len()));
            lens.push(s.len());
        }
        Padded { ids, lens, width }
    }

    pub fn batch(&self) -> usize {
        self.lens.len()
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.width..b * self.width + self.lens[b]]
    }

    pub fn tokens(&self) -> usize {
        self.lens.iter().sum()
    }

    /// Queries of width `rows` may see every non-pad key of this sequence.
    pub fn key_mask<T: Scalar>(&self, rows: usize) -> Mask<T> {
        Mask::from_fn(self.batch(), rows, self.width, |b, _, j| j < self.lens[b])
    }

    /// Self-attention mask that also hides future positions.
    pub fn causal_mask<T: Scalar>(&self) -> Mask<T> {
        Mask::from_fn(self.batch(), self.width, self.width, |b, i, j| j <= i && j < self.lens[b].max(1))
    }
}

/// Model-side sequences of a context-aware example: the source gets `<eos>`,
/// the context is wrapped as `<bos> … <eos>`, the target input starts with
/// `<bos>` and the target output ends with `<eos>`.
pub fn model_source(ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.push(EOS);
    v
}

pub fn model_context(ids: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(ids.len() + 2);
    v.push(BOS);
    v.extend_from_slice(ids);
    v.push(EOS);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub example_ids: Vec<usize>,
    pub source: Padded,
    pub context: Padded,
    pub target_in: Padded,
    /// Flattened `batch × target_in.width` labels; `PAD` where absent.
    pub target_out: Vec<usize>,
}

impl Batch {
    pub fn from_examples(examples: &[&Example], max_len: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::invalid("cannot build an empty batch"));
        }
        let mut sources = Vec::with_capacity(examples.len());
        let mut contexts = Vec::with_capacity(examples.len());
        let mut tin = Vec::with_capacity(examples.len());
        let mut tout = Vec::with_capacity(examples.len());
        for ex in examples {
            let s = model_source(&ex.source_ids);
            let c = model_context(&ex.context_ids);
            let mut ti = vec![BOS];
            ti.extend_from_slice(&ex.target_ids);
            let mut to = ex.target_ids.clone();
            to.push(EOS);
            for (what, len) in [("source", s.len()), ("context", c.len()), ("target", ti.len())] {
                if len > max_len {
                    return Err(Error::invalid(format!(
                        "example {}: {what} length {len} exceeds max_len {max_len}",
                        ex.example_id
                    )));
                }
            }
            sources.push(s);
            contexts.push(c);
            tin.push(ti);
            tout.push(to);
        }
        let target_in = Padded::from_seqs(&tin);
        let target_out = Padded::from_seqs(&tout).ids;
        Ok(Batch {
            example_ids: examples.iter().map(|e| e.example_id).collect(),
            source: Padded::from_seqs(&sources),
            context: Padded::from_seqs(&contexts),
            target_in,
            target_out,
        })
    }

    pub fn len(&self) -> usize {
        self.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_ids.is_empty()
    }

    /// Number of non-pad target labels.
    pub fn target_tokens(&self) -> usize {
        self.target_out.iter().filter(|&&t| t != PAD).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_and_specials() {
        let ex = Example {
            example_id: 7,
            context_ids: vec![10, 11],
            source_ids: vec![20],
            target_ids: vec![30, 31],
            has_real_context: true,
        };
        let ex2 = Example {
            example_id: 8,
            context_ids: vec![],
            source_ids: vec![21, 22, 23],
            target_ids: vec![32],
            has_real_context: false,
        };
        let b = Batch::from_examples(&[&ex, &ex2], 16).unwrap();
        assert_eq!(b.source.width, 4);
        assert_eq!(b.source.row(0), &[20, EOS]);
        assert_eq!(b.context.row(0), &[BOS, 10, 11, EOS]);
        assert_eq!(b.context.row(1), &[BOS, EOS]);
        assert_eq!(b.target_in.row(0), &[BOS, 30, 31]);
        assert_eq!(&b.target_out[..3], &[30, 31, EOS]);
        assert_eq!(&b.target_out[3..], &[32, EOS, PAD]);
        assert_eq!(b.target_tokens(), 5);
    }

    #[test]
    fn rejects_overlong_sequences() {
        let ex = Example {
            example_id: 1,
            context_ids: vec![5; 10],
            source_ids: vec![5],
            target_ids: vec![5],
            has_real_context: true,
        };
        assert!(Batch::from_examples(&[&ex], 8).is_err());
    }
}
