//! Corpus ingestion, context attachment, BPE, vocabularies, the prepared
//! dataset format and the synthetic gendered toy language.

mod bpe;
mod prepared;
mod raw;
mod synthetic;
mod vocab;

pub use bpe::{apply_bpe, detokenize, learn_bpe, BpeModel, CONNECTOR};
pub use prepared::{build_dataset, read_prepared, write_prepared, Encoded as EncodedDataset, PreparedDataset};
pub(crate) use prepared::read_lines;
pub use raw::{
    attach_context, filter_pairs, ingest, read_raw_file, shuffle_contexts, ContextDirection, IngestReport, RawPair, DEFAULT_MAX_GAP_SECONDS,
    DEFAULT_MIN_OVERLAP,
};
pub use synthetic::{gen_synthetic, gender_of, noun, SyntheticCorpus, SyntheticSpec, ADVERBS, PRONOUNS, VERBS};
pub use vocab::Vocab;

/// Whitespace-tokenized (context, source, target) triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextExample {
    pub example_id: usize,
    pub context: Vec<String>,
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub has_real_context: bool,
}

/// Id-mapped example. Sequences carry no special tokens; the model adds
/// `<eos>` to sources and wraps contexts in `<bos> … <eos>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub example_id: usize,
    pub context_ids: Vec<usize>,
    pub source_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
    pub has_real_context: bool,
}

impl Example {
    /// Same example with `context_ids` replaced.
    pub fn with_context(&self, context_ids: Vec<usize>, has_real_context: bool) -> Self {
        Example {
            context_ids,
            has_real_context,
            ..self.clone()
        }
    }
}

pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}
