//! Translation-quality measurement: corpus BLEU, paired bootstrap
//! significance, coreference annotation files and pronoun test subsets.

mod annotation;
mod bleu;
mod testset;

pub use annotation::{read_annotations, write_annotations, CorefAnnotation, Gender};
pub use bleu::{bootstrap_significance, corpus_bleu, sentence_stats, BleuReport, BleuStats, MAX_ORDER, SIGNIFICANCE_LEVEL};
pub use testset::{build_pronoun_testset, render_gender_table, split_by_gender, ExampleId, GenderSplit, PronounCounts, PronounTestSet};
