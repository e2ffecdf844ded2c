use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AttentionRecord, Punctuation};
use crate::error::{Error, Result};
use crate::eval::CorefAnnotation;

/// Noun-count filter of the multi-noun setting ("more than one noun").
pub const MULTI_NOUN: usize = 2;

/// A chosen context position, or no choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pick {
    Index(usize),
    Abstain,
}

impl Pick {
    pub fn agrees(self, span: (usize, usize)) -> bool {
        matches!(self, Pick::Index(i) if (span.0..=span.1).contains(&i))
    }
}

/// Highest-attention context position in the pronoun's row, skipping
/// `<bos>`, `<eos>` and punctuation; ties go to the lowest index.
pub fn attention_pick(record: &AttentionRecord, annotation: &CorefAnnotation, punct: &Punctuation) -> Result<Pick> {
    if annotation.pronoun_index >= record.rows() {
        return Err(Error::Index {
            op: "attention_pick",
            index: annotation.pronoun_index,
            size: record.rows(),
        });
    }
    let row = record.row(annotation.pronoun_index);
    let mut best: Option<usize> = None;
    for (j, tok) in record.ctx_tokens.iter().enumerate() {
        if punct.is_excluded(tok) {
            continue;
        }
        if best.is_none_or(|b| row[j] > row[b]) {
            best = Some(j);
        }
    }
    Ok(best.map_or(Pick::Abstain, Pick::Index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    Random,
    First,
    Last,
}

/// Picks one of the annotated context nouns.
pub fn heuristic_pick(annotation: &CorefAnnotation, which: Heuristic, rng: &mut impl Rng) -> Pick {
    let nouns = &annotation.noun_positions;
    if nouns.is_empty() {
        return Pick::Abstain;
    }
    Pick::Index(match which {
        Heuristic::First => nouns[0],
        Heuristic::Last => nouns[nouns.len() - 1],
        Heuristic::Random => nouns[rng.random_range(0..nouns.len())],
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MethodScore {
    pub agree: usize,
    /// Examples where the method made a pick.
    pub decided: usize,
    pub abstained: usize,
}

impl MethodScore {
    fn add(&mut self, pick: Pick, span: (usize, usize)) {
        match pick {
            Pick::Abstain => self.abstained += 1,
            p => {
                self.decided += 1;
                if p.agrees(span) {
                    self.agree += 1;
                }
            }
        }
    }

    /// Agreement in percent over non-abstaining examples.
    pub fn percent(&self) -> f64 {
        if self.decided == 0 {
            0.0
        } else {
            100.0 * self.agree as f64 / self.decided as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub min_nouns: usize,
    pub examples: usize,
    pub random: MethodScore,
    pub first: MethodScore,
    pub last: MethodScore,
    pub attention: MethodScore,
    /// Per-example picks in join order (used by confusion tables).
    pub attention_picks: Vec<Pick>,
    pub spans: Vec<(usize, usize)>,
}

impl AgreementReport {
    pub fn summary(&self) -> String {
        format!(
            "min_nouns={} examples={} random={:.1} first={:.1} last={:.1} attention={:.1} attention_abstained={}",
            self.min_nouns,
            self.examples,
            self.random.percent(),
            self.first.percent(),
            self.last.percent(),
            self.attention.percent(),
            self.attention.abstained
        )
    }
}

/// Joins records and annotations on example id, keeps annotations with at
/// least `min_nouns` context nouns and scores every method against the gold
/// antecedent span.
pub fn agreement_report(
    records: &[AttentionRecord],
    annotations: &[CorefAnnotation],
    min_nouns: usize,
    seed: u64,
    punct: &Punctuation,
) -> Result<AgreementReport> {
    let by_id: HashMap<usize, &AttentionRecord> = records.iter().map(|r| (r.example_id, r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = AgreementReport {
        min_nouns,
        examples: 0,
        random: MethodScore::default(),
        first: MethodScore::default(),
        last: MethodScore::default(),
        attention: MethodScore::default(),
        attention_picks: Vec::new(),
        spans: Vec::new(),
    };
    for a in annotations.iter().filter(|a| a.context_noun_count >= min_nouns) {
        let Some(r) = by_id.get(&a.example_id) else { continue };
        let span = a.antecedent_span;
        rep.examples += 1;
        rep.random.add(heuristic_pick(a, Heuristic::Random, &mut rng), span);
        rep.first.add(heuristic_pick(a, Heuristic::First, &mut rng), span);
        rep.last.add(heuristic_pick(a, Heuristic::Last, &mut rng), span);
        let pick = attention_pick(r, a, punct)?;
        rep.attention.add(pick, span);
        rep.attention_picks.push(pick);
        rep.spans.push(span);
    }
    if rep.examples == 0 {
        return Err(Error::invalid(format!(
            "no annotated example with at least {min_nouns} context nouns has an attention record"
        )));
    }
    Ok(rep)
}

/// 2×2 table: rows are method `a` right/wrong, columns method `b`
/// right/wrong. Abstentions count as wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub counts: [[usize; 2]; 2],
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn percentages(&self) -> [[f64; 2]; 2] {
        let t = self.total().max(1) as f64;
        self.counts.map(|row| row.map(|c| 100.0 * c as f64 / t))
    }
}

pub fn confusion_table(picks_a: &[Pick], picks_b: &[Pick], truth_spans: &[(usize, usize)]) -> Result<Confusion> {
    if picks_a.len() != picks_b.len() || picks_a.len() != truth_spans.len() {
        return Err(Error::invalid(format!(
            "misaligned inputs: {} / {} picks for {} spans",
            picks_a.len(),
            picks_b.len(),
            truth_spans.len()
        )));
    }
    let mut counts = [[0; 2]; 2];
    for ((a, b), &span) in picks_a.iter().zip(picks_b).zip(truth_spans) {
        counts[usize::from(!a.agrees(span))][usize::from(!b.agrees(span))] += 1;
    }
    Ok(Confusion { counts })
}
