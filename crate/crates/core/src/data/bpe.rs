use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::special;

/// Suffix marking a non-final subword.
pub const CONNECTOR: &str = "@@";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        BpeModel { merges, ranks }
    }

    /// Segments one word, marking every non-final piece with [`CONNECTOR`].
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        if special::is_special(word) {
            return vec![word.to_string()];
        }
        let mut parts: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = parts
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut merged = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && &parts[i] == a && &parts[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut parts[i]));
                    i += 1;
                }
            }
            parts = merged;
        }
        let last = parts.len() - 1;
        parts
            .into_iter()
            .enumerate()
            .map(|(i, p)| if i < last { format!("{p}{CONNECTOR}") } else { p })
            .collect()
    }

    /// One `left right` pair per line, in merge order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text: String = self.merges.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let name = path.as_ref().display().to_string();
        let text = fs::read_to_string(path)?;
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut it = line.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => merges.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(Error::Parse {
                        path: name,
                        line: i + 1,
                        message: "expected `left right`".into(),
                    })
                }
            }
        }
        Ok(BpeModel::new(merges))
    }
}

/// Learns up to `num_merges` merges from whitespace-tokenized lines. Each
/// step merges the most frequent adjacent pair; ties go to the
/// lexicographically smallest pair. Learning stops early once no pair is left.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], num_merges: i64) -> Result<BpeModel> {
    if num_merges < 0 {
        return Err(Error::config(format!("number of merges must be non-negative, got {num_merges}")));
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *freq.entry(w).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, usize)> = freq
        .into_iter()
        .filter(|(w, _)| !special::is_special(w))
        .map(|(w, c)| (w.chars().map(String::from).collect(), c))
        .collect();
    let mut merges = Vec::new();
    while (merges.len() as i64) < num_merges {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (parts, c) in &words {
            for w in parts.windows(2) {
                *counts.entry((w[0].as_str(), w[1].as_str())).or_default() += c;
            }
        }
        let best = counts
            .into_iter()
            .filter(|((a, b), _)| !special::is_special(&format!("{a}{b}")))
            .min_by(|(pa, ca), (pb, cb)| cb.cmp(ca).then_with(|| pa.cmp(pb)));
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        for (parts, _) in &mut words {
            let mut i = 0;
            while i + 1 < parts.len() {
                if parts[i] == a && parts[i + 1] == b {
                    parts[i] = format!("{a}{b}");
                    parts.remove(i + 1);
                }
                i += 1;
            }
        }
        merges.push((a, b));
    }
    Ok(BpeModel::new(merges))
}

/// Segments a whitespace-tokenized line.
pub fn apply_bpe(model: &BpeModel, text: &str) -> Vec<String> {
    text.split_whitespace().flat_map(|w| model.segment_word(w)).collect()
}

/// Joins connector-marked pieces back into words.
pub fn detokenize<S: AsRef<str>>(pieces: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for p in pieces {
        let p = p.as_ref();
        match p.strip_suffix(CONNECTOR) {
            Some(stem) => cur.push_str(stem),
            None => {
                cur.push_str(p);
                out.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
