use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;
/// Threshold used when reporting significance.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

/// Sufficient statistics of BLEU-4; additive over sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuReport {
    /// Percentage in [0, 100].
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn report(&self) -> BleuReport {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            if self.totals[n] > 0 {
                precisions[n] = self.matches[n] as f64 / self.totals[n] as f64;
            }
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp()
        };
        let bleu = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuReport {
            bleu,
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

impl BleuReport {
    /// Machine-readable `key=value` record.
    pub fn to_record(&self) -> String {
        format!(
            "bleu={:.4} p1={:.6} p2={:.6} p3={:.6} p4={:.6} bp={:.6} hyp_len={} ref_len={}",
            self.bleu,
            self.precisions[0],
            self.precisions[1],
            self.precisions[2],
            self.precisions[3],
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        )
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram statistics of one sentence pair.
pub fn sentence_stats<S: AsRef<str>, R: AsRef<str>>(hyp: &[S], reference: &[R]) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    }
    s
}

fn all_stats<S: AsRef<str>, R: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<R>]) -> Result<Vec<BleuStats>> {
    if hyps.len() != refs.len() {
        return Err(Error::invalid(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    Ok(hyps.iter().zip(refs).map(|(h, r)| sentence_stats(h, r)).collect())
}

/// Corpus BLEU-4 over whitespace tokens, no smoothing.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<R>]) -> Result<BleuReport> {
    let mut total = BleuStats::default();
    for s in all_stats(hyps, refs)? {
        total += s;
    }
    Ok(total.report())
}

/// Paired bootstrap test of "b is better than a": the fraction of resamples
/// in which BLEU(b) ≤ BLEU(a).
pub fn bootstrap_significance<S: AsRef<str>, R: AsRef<str>>(
    hyp_a: &[Vec<S>],
    hyp_b: &[Vec<S>],
    refs: &[Vec<R>],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let a = all_stats(hyp_a, refs)?;
    let b = all_stats(hyp_b, refs)?;
    if samples == 0 || a.is_empty() {
        return Err(Error::invalid("bootstrap needs at least one sentence and one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.len();
    let mut not_better = 0;
    for _ in 0..samples {
        let (mut sa, mut sb) = (BleuStats::default(), BleuStats::default());
        for _ in 0..n {
            let i = rng.random_range(0..n);
            sa += a[i];
            sb += b[i];
        }
        if sb.report().bleu <= sa.report().bleu {
            not_better += 1;
        }
    }
    Ok(not_better as f64 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn fixtures() {
        let r = corpus_bleu(&[toks("a b c d")], &[toks("a b c d")]).unwrap();
        assert!((r.bleu - 100.0).abs() < 1e-9);
        let r = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
        assert_eq!(r.precisions, [1.0; 4]);
        assert!((r.brevity_penalty - (-0.25f64).exp()).abs() < 1e-12);
        assert!((r.bleu - 77.88).abs() < 0.01, "{}", r.bleu);
        let r = corpus_bleu(&[toks("x y z w")], &[toks("a b c d")]).unwrap();
        assert_eq!(r.bleu, 0.0);
        assert!(corpus_bleu(&[toks("a")], &Vec::<Vec<String>>::new()).is_err());
    }

    #[test]
    fn clipping() {
        let s = sentence_stats(&toks("the the the"), &toks("the cat"));
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 3);
        assert_eq!(s.totals[3], 0);
    }

    #[test]
    fn bootstrap_behaviour() {
        let refs: Vec<Vec<String>> = (0..200).map(|i| toks(&format!("w{i} a b c d e"))).collect();
        let shuffled: Vec<Vec<String>> = refs.iter().map(|r| r.iter().rev().cloned().collect()).collect();
        let p = bootstrap_significance(&shuffled, &refs, &refs, 1000, 1).unwrap();
        assert!(p < 0.01, "{p}");
        let same = bootstrap_significance(&refs, &refs, &refs, 1000, 1).unwrap();
        assert_eq!(same, 1.0);
        assert_eq!(p, bootstrap_significance(&shuffled, &refs, &refs, 1000, 1).unwrap());
    }

    proptest! {
        #[test]
        fn permutation_invariant(sents in proptest::collection::vec(("[a-c]( [a-c]){0,6}", "[a-c]( [a-c]){0,6}"), 1..8), rot in 0usize..8) {
            let hyps: Vec<Vec<String>> = sents.iter().map(|(h, _)| toks(h)).collect();
            let refs: Vec<Vec<String>> = sents.iter().map(|(_, r)| toks(r)).collect();
            let base = corpus_bleu(&hyps, &refs).unwrap();
            let k = rot % hyps.len();
            let (mut h2, mut r2) = (hyps.clone(), refs.clone());
            h2.rotate_left(k);
            r2.rotate_left(k);
            let rotated = corpus_bleu(&h2, &r2).unwrap();
            prop_assert_eq!(base.bleu, rotated.bleu);
            prop_assert!((0.0..=100.0).contains(&base.bleu));
            prop_assert!(base.brevity_penalty <= 1.0);
        }
    }
}
