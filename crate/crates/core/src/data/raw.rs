use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{tokens, TextExample};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_OVERLAP: f64 = 0.9;
pub const DEFAULT_MAX_GAP_SECONDS: f64 = 7.0;

/// Fraction of malformed lines above which ingestion fails.
const MAX_MALFORMED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawPair {
    pub movie_id: String,
    pub time_start: f64,
    pub time_end: f64,
    pub overlap: f64,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub lines: usize,
    pub skipped: usize,
    /// 1-based numbers of the skipped lines.
    pub skipped_lines: Vec<usize>,
}

fn parse_line(line: &str) -> Option<RawPair> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return None;
    }
    let time_start: f64 = fields[1].trim().parse().ok()?;
    let time_end: f64 = fields[2].trim().parse().ok()?;
    let overlap: f64 = fields[3].trim().parse().ok()?;
    let (source, target) = (tokens(fields[4]), tokens(fields[5]));
    let valid = !fields[0].trim().is_empty()
        && time_start.is_finite()
        && time_end >= time_start
        && (0.0..=1.0).contains(&overlap)
        && !source.is_empty()
        && !target.is_empty();
    valid.then(|| RawPair {
        movie_id: fields[0].trim().to_string(),
        time_start,
        time_end,
        overlap,
        source,
        target,
    })
}

/// Parses tab-separated `movie_id, time_start, time_end, overlap, source,
/// target` records. Malformed lines are skipped and reported.
pub fn ingest<R: BufRead>(input: R) -> Result<(Vec<RawPair>, IngestReport)> {
    let mut pairs = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_line(&line) {
            Some(p) => pairs.push(p),
            None => {
                report.skipped += 1;
                report.skipped_lines.push(i + 1);
            }
        }
    }
    if report.lines > 0 && report.skipped as f64 > MAX_MALFORMED_FRACTION * report.lines as f64 {
        return Err(Error::invalid(format!(
            "{} of {} lines are malformed (limit 10%)",
            report.skipped, report.lines
        )));
    }
    Ok((pairs, report))
}

pub fn read_raw_file(path: impl AsRef<Path>) -> Result<(Vec<RawPair>, IngestReport)> {
    ingest(BufReader::new(File::open(path)?))
}

/// Keeps pairs whose overlap is at least `min_overlap`.
pub fn filter_pairs(pairs: &[RawPair], min_overlap: f64) -> Vec<RawPair> {
    pairs.iter().filter(|p| p.overlap >= min_overlap).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextDirection {
    Previous,
    Next,
    None,
    /// Real previous-sentence contexts, permuted across the whole set.
    Shuffled { seed: u64 },
}

impl FromStr for ContextDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "previous" | "prev" => Ok(ContextDirection::Previous),
            "next" => Ok(ContextDirection::Next),
            "none" => Ok(ContextDirection::None),
            "shuffled" => Ok(ContextDirection::Shuffled { seed: 0 }),
            other => Err(Error::config(format!("unknown context direction `{other}`"))),
        }
    }
}

/// Pairs must be grouped by movie and sorted by start time within each movie.
/// Gaps are measured as `later.time_start − earlier.time_end`, inclusive at
/// `max_gap`. Examples without a usable neighbour keep an empty context.
pub fn attach_context(pairs: &[RawPair], max_gap: f64, direction: ContextDirection) -> Result<Vec<TextExample>> {
    let mut seen = BTreeSet::new();
    for (i, p) in pairs.iter().enumerate() {
        let new_group = i == 0 || pairs[i - 1].movie_id != p.movie_id;
        if new_group {
            if !seen.insert(p.movie_id.as_str()) {
                return Err(Error::invalid(format!("movie `{}` is not contiguous in the input", p.movie_id)));
            }
        } else if p.time_start < pairs[i - 1].time_start {
            return Err(Error::invalid(format!(
                "movie `{}` is not sorted by time at record {}",
                p.movie_id,
                i + 1
            )));
        }
    }
    let linked = |a: usize, b: usize| pairs[a].movie_id == pairs[b].movie_id && pairs[b].time_start - pairs[a].time_end <= max_gap;
    let neighbour = |i: usize, dir: ContextDirection| -> Option<usize> {
        match dir {
            ContextDirection::Previous | ContextDirection::Shuffled { .. } => (i > 0 && linked(i - 1, i)).then(|| i - 1),
            ContextDirection::Next => (i + 1 < pairs.len() && linked(i, i + 1)).then_some(i + 1),
            ContextDirection::None => None,
        }
    };
    let mut out: Vec<TextExample> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ctx = neighbour(i, direction);
            TextExample {
                example_id: i,
                context: ctx.map(|j| pairs[j].source.clone()).unwrap_or_default(),
                source: p.source.clone(),
                target: p.target.clone(),
                has_real_context: ctx.is_some(),
            }
        })
        .collect();
    if let ContextDirection::Shuffled { seed } = direction {
        shuffle_contexts(&mut out, seed);
    }
    Ok(out)
}

/// Applies one seeded permutation to the real contexts of `examples`.
/// Examples without a real context are left untouched.
pub fn shuffle_contexts(examples: &mut [TextExample], seed: u64) {
    let slots: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].has_real_context).collect();
    let mut contexts: Vec<Vec<String>> = slots.iter().map(|&i| examples[i].context.clone()).collect();
    contexts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (&i, c) in slots.iter().zip(contexts) {
        examples[i].context = c;
    }
}
