use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::{CorefAnnotation, Gender};
use crate::data::{Example, TextExample};
use crate::error::{Error, Result};

/// Table-3 style counts for one pronoun.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PronounCounts {
    pub total: usize,
    /// Antecedents without a noun (pronominal antecedents).
    pub pronominal_antecedent: usize,
}

/// Anything carrying an example id: encoded or text examples.
pub trait ExampleId {
    fn example_id(&self) -> usize;
}

impl ExampleId for Example {
    fn example_id(&self) -> usize {
        self.example_id
    }
}

impl ExampleId for TextExample {
    fn example_id(&self) -> usize {
        self.example_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PronounTestSet<E = Example> {
    pub examples: Vec<E>,
    pub annotations: Vec<CorefAnnotation>,
    pub counts: BTreeMap<String, PronounCounts>,
}

impl<E> PronounTestSet<E> {
    /// `pronoun  N  #pronominal antecedent` rows.
    pub fn render_counts(&self) -> String {
        let mut out = String::from("pronoun\tN\t#pronominal antecedent\n");
        for (p, c) in &self.counts {
            let _ = writeln!(out, "{p}\t{}\t{}", c.total, c.pronominal_antecedent);
        }
        out
    }
}

/// Selects examples whose annotation matches every filter. An empty pronoun
/// filter accepts every pronoun. Examples with several matching annotations
/// appear once, with their first matching annotation.
pub fn build_pronoun_testset<E: ExampleId + Clone>(
    examples: &[E],
    annotations: &[CorefAnnotation],
    pronouns: &[&str],
    require_noun_antecedent: bool,
    min_context_nouns: usize,
) -> Result<PronounTestSet<E>> {
    let by_id: HashMap<usize, &E> = examples.iter().map(|e| (e.example_id(), e)).collect();
    let dangling: Vec<usize> = annotations
        .iter()
        .map(|a| a.example_id)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !dangling.is_empty() {
        return Err(Error::invalid(format!("annotations reference unknown examples {dangling:?}")));
    }
    let mut set = PronounTestSet {
        examples: Vec::new(),
        annotations: Vec::new(),
        counts: BTreeMap::new(),
    };
    let mut taken = std::collections::HashSet::new();
    for a in annotations {
        let pron_ok = pronouns.is_empty() || pronouns.iter().any(|p| p.eq_ignore_ascii_case(&a.pronoun));
        if !pron_ok || (require_noun_antecedent && !a.antecedent_has_noun) || a.context_noun_count < min_context_nouns {
            continue;
        }
        if !taken.insert(a.example_id) {
            continue;
        }
        let c = set.counts.entry(a.pronoun.clone()).or_default();
        c.total += 1;
        if !a.antecedent_has_noun {
            c.pronominal_antecedent += 1;
        }
        set.examples.push(by_id[&a.example_id].clone());
        set.annotations.push(a.clone());
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenderSplit<E = Example> {
    /// Indexed by [`Gender::index`].
    pub buckets: [Vec<E>; 4],
}

impl<E> GenderSplit<E> {
    pub fn get(&self, g: Gender) -> &[E] {
        &self.buckets[g.index()]
    }
}

pub fn split_by_gender<E: ExampleId + Clone>(subset: &PronounTestSet<E>) -> Result<GenderSplit<E>> {
    let mut buckets: [Vec<E>; 4] = Default::default();
    for (ex, a) in subset.examples.iter().zip(&subset.annotations) {
        let g = a
            .gender
            .ok_or_else(|| Error::invalid(format!("example {} has no gender label", ex.example_id())))?;
        buckets[g.index()].push(ex.clone());
    }
    Ok(GenderSplit { buckets })
}

/// Per-gender BLEU layout: `type N baseline model diff.`
pub fn render_gender_table(rows: &[(Gender, usize, f64, f64)]) -> String {
    let mut out = String::from("type\tN\tbaseline\tour model\tdiff.\n");
    for &(g, n, base, ours) in rows {
        let name = match g {
            Gender::Masc => "masc.",
            Gender::Fem => "fem.",
            Gender::Neut => "neuter",
            Gender::Plur => "plural",
        };
        let _ = writeln!(out, "{name}\t{n}\t{base:.1}\t{ours:.1}\t{:+.1}", ours - base);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: usize) -> Example {
        Example {
            example_id: id,
            context_ids: vec![5],
            source_ids: vec![6],
            target_ids: vec![7],
            has_real_context: true,
        }
    }

    fn ann(id: usize, pronoun: &str, has_noun: bool, nouns: usize, g: Option<Gender>) -> CorefAnnotation {
        CorefAnnotation {
            example_id: id,
            pronoun: pronoun.into(),
            pronoun_index: 0,
            antecedent_span: (1, 1),
            antecedent_has_noun: has_noun,
            context_noun_count: nouns,
            gender: g,
            noun_positions: vec![],
        }
    }

    fn fixture() -> (Vec<Example>, Vec<CorefAnnotation>) {
        let exs = (0..6).map(ex).collect();
        let anns = vec![
            ann(0, "it", true, 1, Some(Gender::Fem)),
            ann(1, "it", false, 0, None),
            ann(2, "you", true, 2, None),
            ann(3, "it", true, 2, Some(Gender::Fem)),
            ann(4, "It", true, 3, Some(Gender::Masc)),
            ann(5, "I", false, 1, None),
        ];
        (exs, anns)
    }

    #[test]
    fn hand_counted_subset() {
        let (exs, anns) = fixture();
        let s = build_pronoun_testset(&exs, &anns, &["it"], true, 1).unwrap();
        let ids: Vec<usize> = s.examples.iter().map(|e| e.example_id).collect();
        assert_eq!(ids, vec![0, 3, 4]);
        let multi = build_pronoun_testset(&exs, &anns, &["it"], true, 2).unwrap();
        assert!(multi.examples.iter().all(|e| ids.contains(&e.example_id)));
        assert_eq!(multi.examples.len(), 2);
        let all = build_pronoun_testset(&exs, &anns, &["it"], false, 0).unwrap();
        assert_eq!(all.counts["it"].pronominal_antecedent, 1);
        assert!(build_pronoun_testset(&exs[..2], &anns, &[], false, 0).is_err());
    }

    #[test]
    fn gender_partition() {
        let (exs, anns) = fixture();
        let s = build_pronoun_testset(&exs, &anns, &["it"], true, 1).unwrap();
        let split = split_by_gender(&s).unwrap();
        assert_eq!(split.get(Gender::Fem).len(), 2);
        assert_eq!(split.get(Gender::Masc).len(), 1);
        assert_eq!(split.get(Gender::Neut).len(), 0);
        let total: usize = split.buckets.iter().map(Vec::len).sum();
        assert_eq!(total, s.examples.len());
        let with_missing = build_pronoun_testset(&exs, &anns, &["you"], false, 0).unwrap();
        assert!(split_by_gender(&with_missing).is_err());
    }
}
