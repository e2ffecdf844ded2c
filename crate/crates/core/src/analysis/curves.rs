use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{useful_mass, useful_mass_per_token, AttentionRecord, Punctuation};
use crate::error::{Error, Result};
use crate::eval::BleuStats;
use crate::special;

/// Mean of a statistic over the records sharing `key`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub key: usize,
    pub value: f64,
    pub count: usize,
}

fn bucketize(pairs: impl IntoIterator<Item = (usize, f64)>) -> Vec<Bucket> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (k, v) in pairs {
        let e = acc.entry(k).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(key, (sum, count))| Bucket {
            key,
            value: sum / count as f64,
            count,
        })
        .collect()
}

fn source_len(r: &AttentionRecord) -> usize {
    r.src_tokens.iter().filter(|t| !special::is_special(t)).count()
}

fn context_len(r: &AttentionRecord) -> usize {
    r.ctx_tokens.iter().filter(|t| !special::is_special(t)).count()
}

/// Mean useful mass per record, bucketed by source length (tokens, without
/// `<eos>`).
pub fn mass_by_source_length(records: &[AttentionRecord], punct: &Punctuation) -> Vec<Bucket> {
    bucketize(records.iter().map(|r| (source_len(r), useful_mass(r, punct))))
}

/// Same, bucketed by context length (without `<bos>`/`<eos>`).
pub fn mass_by_context_length(records: &[AttentionRecord], punct: &Punctuation) -> Vec<Bucket> {
    bucketize(records.iter().map(|r| (context_len(r), useful_mass(r, punct))))
}

/// Useful mass by 1-based source position over records of one source
/// length. Without an explicit length the most common length is used
/// (ties: the shorter one). Returns the cohort length and the series.
pub fn mass_by_position(records: &[AttentionRecord], punct: &Punctuation, length: Option<usize>) -> Result<(usize, Vec<Bucket>)> {
    let len = match length {
        Some(l) => l,
        None => {
            let counts = bucketize(records.iter().map(|r| (source_len(r), 0.0)));
            counts
                .iter()
                .max_by(|a, b| a.count.cmp(&b.count).then(b.key.cmp(&a.key)))
                .map(|b| b.key)
                .ok_or_else(|| Error::invalid("no records for the position curve"))?
        }
    };
    let cohort: Vec<&AttentionRecord> = records.iter().filter(|r| source_len(r) == len).collect();
    if cohort.is_empty() {
        return Err(Error::invalid(format!("no records with source length {len}")));
    }
    let mut pairs = Vec::new();
    for r in cohort {
        let per = useful_mass_per_token(r, punct);
        let words = r.src_tokens.iter().zip(per).filter(|(t, _)| !special::is_special(t));
        for (i, (_, m)) in words.enumerate() {
            pairs.push((i + 1, m));
        }
    }
    Ok((len, bucketize(pairs)))
}

/// Corpus BLEU of each source-length bucket.
pub fn bleu_by_source_length(source_lengths: &[usize], stats: &[BleuStats]) -> Result<Vec<Bucket>> {
    if source_lengths.len() != stats.len() {
        return Err(Error::invalid(format!(
            "{} lengths for {} sentences",
            source_lengths.len(),
            stats.len()
        )));
    }
    let mut acc: BTreeMap<usize, (BleuStats, usize)> = BTreeMap::new();
    for (&l, &s) in source_lengths.iter().zip(stats) {
        let e = acc.entry(l).or_default();
        e.0 += s;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(key, (s, count))| Bucket {
            key,
            value: s.report().bleu,
            count,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub by_source_length: Vec<Bucket>,
    pub by_context_length: Vec<Bucket>,
    pub position_cohort_length: usize,
    pub by_position: Vec<Bucket>,
    pub bleu_by_source_length: Vec<Bucket>,
}

/// All series at once. `bleu` pairs per-sentence source lengths with BLEU
/// statistics; when absent the BLEU series is empty.
pub fn curves(
    records: &[AttentionRecord],
    punct: &Punctuation,
    cohort_length: Option<usize>,
    bleu: Option<(&[usize], &[BleuStats])>,
) -> Result<Curves> {
    let (position_cohort_length, by_position) = mass_by_position(records, punct, cohort_length)?;
    Ok(Curves {
        by_source_length: mass_by_source_length(records, punct),
        by_context_length: mass_by_context_length(records, punct),
        position_cohort_length,
        by_position,
        bleu_by_source_length: match bleu {
            Some((l, s)) => bleu_by_source_length(l, s)?,
            None => Vec::new(),
        },
    })
}

/// Comma-separated columns `key_name,value_name,count` with a header row.
pub fn write_series_csv(path: impl AsRef<Path>, key_name: &str, value_name: &str, series: &[Bucket]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{key_name},{value_name},count")?;
    for b in series {
        writeln!(w, "{},{},{}", b.key, b.value, b.count)?;
    }
    w.flush()?;
    Ok(())
}
