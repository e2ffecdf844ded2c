//! Analysis of source→context attention: useful attention mass, the most
//! context-dependent source words, length and position curves, agreement of
//! the attention argmax with gold antecedents, confusion tables and heatmaps.

mod agreement;
mod curves;
mod heatmap;
mod mass;
mod record;
mod tables;

pub use agreement::{
    agreement_report, attention_pick, confusion_table, heuristic_pick, AgreementReport, Confusion, Heuristic, MethodScore, Pick,
    MULTI_NOUN,
};
pub use curves::{
    bleu_by_source_length, curves, mass_by_context_length, mass_by_position, mass_by_source_length, write_series_csv, Bucket,
    Curves,
};
pub use heatmap::{heatmap_export, heatmap_svg};
pub use mass::{top_context_words, useful_mass, useful_mass_per_token, word_masses, PositionFilter, Punctuation, WordStat};
pub use record::AttentionRecord;
pub use tables::{render_agreement_table, render_confusion_table, render_top_words_table, AgreementRow};
