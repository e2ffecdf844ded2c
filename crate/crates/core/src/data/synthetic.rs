//! Toy language in which the translation of "it" depends on the grammatical
//! gender of a noun in the previous sentence.
//!
//! ```text
//! context: the noun7 is here .  [near the noun12 .]
//! source:  it fell today .
//! target:  oni upali segodnya .
//! ```
//! Noun `k` has gender `k mod 4` (masc, fem, neut, plur). The antecedent is
//! always the first noun; the optional second noun is a distractor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TextExample;
use crate::error::{Error, Result};
use crate::eval::{CorefAnnotation, Gender};

pub const PRONOUNS: [&str; 4] = ["on", "ona", "ono", "oni"];
pub const VERBS: [&str; 4] = ["upal", "upala", "upalo", "upali"];
/// Source adverbs and their fixed translations. Every sentence carries one so
/// that targets have four tokens and BLEU-4 is defined.
pub const ADVERBS: [(&str, &str); 4] = [("today", "segodnya"), ("again", "snova"), ("there", "tam"), ("slowly", "medlenno")];

/// Model-side context positions (`<bos>` is position 0).
const ANTECEDENT_SPAN: (usize, usize) = (1, 2);
const SUBJECT_POSITION: usize = 2;
const DISTRACTOR_POSITION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub nouns: usize,
    pub distractor_prob: f64,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub examples: Vec<TextExample>,
    pub annotations: Vec<CorefAnnotation>,
}

pub fn gender_of(noun: usize) -> Gender {
    Gender::ALL[noun % 4]
}

pub fn noun(k: usize) -> String {
    format!("noun{k}")
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.nouns < 4 {
        return Err(Error::config(format!("noun inventory must cover all 4 genders, got {}", spec.nouns)));
    }
    if !(0.0..=1.0).contains(&spec.distractor_prob) {
        return Err(Error::config(format!("distractor probability {} outside [0, 1]", spec.distractor_prob)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.size);
    let mut annotations = Vec::with_capacity(spec.size);
    for id in 0..spec.size {
        let k = rng.random_range(0..spec.nouns);
        let distractor = rng.random_bool(spec.distractor_prob).then(|| {
            let j = rng.random_range(0..spec.nouns - 1);
            if j >= k {
                j + 1
            } else {
                j
            }
        });
        let (adv_src, adv_tgt) = ADVERBS[rng.random_range(0..ADVERBS.len())];
        let mut context = vec!["the".to_string(), noun(k), "is".into(), "here".into(), ".".into()];
        if let Some(j) = distractor {
            context.extend(["near".to_string(), "the".into(), noun(j), ".".into()]);
        }
        let g = gender_of(k);
        examples.push(TextExample {
            example_id: id,
            context,
            source: ["it", "fell", adv_src, "."].map(String::from).to_vec(),
            target: [PRONOUNS[g.index()], VERBS[g.index()], adv_tgt, "."].map(String::from).to_vec(),
            has_real_context: true,
        });
        let mut noun_positions = vec![SUBJECT_POSITION];
        if distractor.is_some() {
            noun_positions.push(DISTRACTOR_POSITION);
        }
        annotations.push(CorefAnnotation {
            example_id: id,
            pronoun: "it".into(),
            pronoun_index: 0,
            antecedent_span: ANTECEDENT_SPAN,
            antecedent_has_noun: true,
            context_noun_count: noun_positions.len(),
            gender: Some(g),
            noun_positions,
        });
    }
    Ok(SyntheticCorpus { examples, annotations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(size: usize, p: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            nouns: 40,
            distractor_prob: p,
            size,
            seed,
        }
    }

    #[test]
    fn gender_rule() {
        assert_eq!(gender_of(5), Gender::Fem);
        assert_eq!(PRONOUNS[gender_of(5).index()], "ona");
        assert_eq!(VERBS[gender_of(5).index()], "upala");
    }

    #[test]
    fn noun_counts_and_positions() {
        let c = gen_synthetic(&spec(200, 0.5, 1)).unwrap();
        for (ex, ann) in c.examples.iter().zip(&c.annotations) {
            let nouns = ex.context.iter().filter(|t| t.starts_with("noun")).count();
            assert_eq!(nouns, ann.context_noun_count);
            // model-side positions are shifted by the leading <bos>
            for &p in &ann.noun_positions {
                assert!(ex.context[p - 1].starts_with("noun"));
            }
            let k: usize = ex.context[1]["noun".len()..].parse().unwrap();
            assert_eq!(ann.gender, Some(gender_of(k)));
            assert_eq!(ex.target[0], PRONOUNS[gender_of(k).index()]);
            assert_eq!(ex.source[ann.pronoun_index], "it");
        }
    }

    #[test]
    fn distractor_rate_is_binomial() {
        let c = gen_synthetic(&spec(1000, 0.5, 7)).unwrap();
        let with = c.annotations.iter().filter(|a| a.context_noun_count == 2).count();
        assert!((450..=550).contains(&with), "{with}");
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(gen_synthetic(&spec(50, 0.3, 9)).unwrap(), gen_synthetic(&spec(50, 0.3, 9)).unwrap());
        assert!(gen_synthetic(&SyntheticSpec { nouns: 3, ..spec(1, 0.5, 0) }).is_err());
    }
}
