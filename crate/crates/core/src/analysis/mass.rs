use std::collections::{BTreeMap, HashSet};

use regex::Regex;

use super::AttentionRecord;
use crate::data::CONNECTOR;
use crate::special;

/// Tokens treated as punctuation: anything made only of Unicode `P*`
/// characters, plus an extra list (by default the bundled
/// `data/punctuation.txt`).
#[derive(Debug, Clone)]
pub struct Punctuation {
    pattern: Regex,
    extra: HashSet<String>,
}

impl Default for Punctuation {
    fn default() -> Self {
        Punctuation::with_extra(include_str!("../../data/punctuation.txt").lines())
    }
}

impl Punctuation {
    pub fn with_extra<I: IntoIterator<Item = S>, S: AsRef<str>>(extra: I) -> Self {
        Punctuation {
            pattern: Regex::new(r"^\p{P}+$").expect("valid pattern"),
            extra: extra
                .into_iter()
                .map(|s| s.as_ref().trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    pub fn is_punctuation(&self, token: &str) -> bool {
        self.extra.contains(token) || self.pattern.is_match(token)
    }

    /// Excluded from useful mass and from attention picks: `<bos>`, `<eos>`,
    /// `<pad>` and punctuation.
    pub fn is_excluded(&self, token: &str) -> bool {
        token == special::BOS_STR || token == special::EOS_STR || token == special::PAD_STR || self.is_punctuation(token)
    }
}

/// Per source token: attention summed over non-excluded context positions.
pub fn useful_mass_per_token(record: &AttentionRecord, punct: &Punctuation) -> Vec<f64> {
    let keep: Vec<bool> = record.ctx_tokens.iter().map(|t| !punct.is_excluded(t)).collect();
    (0..record.rows())
        .map(|i| record.row(i).iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| w).sum())
        .collect()
}

fn is_source_word(token: &str) -> bool {
    !special::is_special(token)
}

/// Mean useful mass over the source tokens of a record (source-side special
/// tokens such as the final `<eos>` are not averaged).
pub fn useful_mass(record: &AttentionRecord, punct: &Punctuation) -> f64 {
    let per = useful_mass_per_token(record, punct);
    let vals: Vec<f64> = per
        .iter()
        .zip(&record.src_tokens)
        .filter(|(_, t)| is_source_word(t))
        .map(|(&m, _)| m)
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Source words of a record with their useful mass and 1-based position.
/// BPE pieces of a word are merged and the word's mass is the mean over its
/// pieces. Words are lowercased.
pub fn word_masses(record: &AttentionRecord, punct: &Punctuation) -> Vec<(String, f64, usize)> {
    let per = useful_mass_per_token(record, punct);
    let mut out = Vec::new();
    let (mut word, mut sum, mut pieces) = (String::new(), 0.0, 0usize);
    for (tok, m) in record.src_tokens.iter().zip(per) {
        if !is_source_word(tok) {
            continue;
        }
        sum += m;
        pieces += 1;
        match tok.strip_suffix(CONNECTOR) {
            Some(stem) => word.push_str(stem),
            None => {
                word.push_str(tok);
                let position = out.len() + 1;
                out.push((std::mem::take(&mut word).to_lowercase(), sum / pieces as f64, position));
                sum = 0.0;
                pieces = 0;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionFilter {
    All,
    /// Only occurrences at positions higher than first.
    AfterFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordStat {
    pub word: String,
    pub mean_mass: f64,
    pub mean_position: f64,
    pub count: usize,
}

/// Source word types ranked by mean useful mass. Types seen fewer than
/// `min_count` times (after position filtering) are dropped. Ties are broken
/// alphabetically.
pub fn top_context_words(
    records: &[AttentionRecord],
    punct: &Punctuation,
    min_count: usize,
    k: usize,
    filter: PositionFilter,
) -> Vec<WordStat> {
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        for (w, m, pos) in word_masses(r, punct) {
            if filter == PositionFilter::AfterFirst && pos <= 1 {
                continue;
            }
            let e = acc.entry(w).or_default();
            e.0 += m;
            e.1 += pos as f64;
            e.2 += 1;
        }
    }
    let mut stats: Vec<WordStat> = acc
        .into_iter()
        .filter(|(_, (_, _, c))| *c >= min_count)
        .map(|(word, (m, p, c))| WordStat {
            word,
            mean_mass: m / c as f64,
            mean_position: p / c as f64,
            count: c,
        })
        .collect();
    stats.sort_by(|a, b| b.mean_mass.total_cmp(&a.mean_mass).then_with(|| a.word.cmp(&b.word)));
    stats.truncate(k);
    stats
}
