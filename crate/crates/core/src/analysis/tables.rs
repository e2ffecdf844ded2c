//! Plain-text renderings of the word, agreement and confusion tables.

use std::fmt::Write;

use super::{Confusion, WordStat};

/// Top words for all positions (left) and positions after the first (right).
pub fn render_top_words_table(all: &[WordStat], after_first: &[WordStat]) -> String {
    let mut out = String::from("word\tattn\tpos\t|\tword\tattn\tpos\n");
    for i in 0..all.len().max(after_first.len()) {
        let cell = |s: Option<&WordStat>| match s {
            Some(w) => format!("{}\t{:.3}\t{:.1}", w.word, w.mean_mass, w.mean_position),
            None => "\t\t".to_string(),
        };
        let _ = writeln!(out, "{}\t|\t{}", cell(all.get(i)), cell(after_first.get(i)));
    }
    out
}

/// One pronoun's agreement percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub pronoun: String,
    pub random: f64,
    pub first: f64,
    pub last: f64,
    pub attention: f64,
}

/// `label` names the noun-count filter the numbers were computed with.
pub fn render_agreement_table(rows: &[AgreementRow], label: &str) -> String {
    let mut out = format!("agreement (in %), {label}\npronoun\trandom\tfirst\tlast\tattention\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{:.0}\t{:.0}\t{:.0}\t{:.0}",
            r.pronoun, r.random, r.first, r.last, r.attention
        );
    }
    out
}

/// Rows: attention right/wrong; columns: the other system right/wrong.
pub fn render_confusion_table(c: &Confusion, other: &str) -> String {
    let p = c.percentages();
    format!(
        "\t{other} right\t{other} wrong\nattn right\t{:.0}\t{:.0}\nattn wrong\t{:.0}\t{:.0}\n",
        p[0][0], p[0][1], p[1][0], p[1][1]
    )
}
