use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{apply_bpe, BpeModel, Example, TextExample, Vocab};
use crate::error::{Error, Result};

/// Post-BPE dataset, one `context<TAB>source<TAB>target` line per example.
/// An empty context field means the example has no real context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreparedDataset {
    pub rows: Vec<TextExample>,
}

/// Result of mapping a prepared dataset onto vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub examples: Vec<Example>,
    pub unknown_tokens: usize,
    /// Examples whose context was cut to `max_len − 2` tokens.
    pub truncated_contexts: usize,
}

impl PreparedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Source vocabulary covers contexts and sources; the target vocabulary
    /// covers targets.
    pub fn vocabularies(&self) -> (Vocab, Vocab) {
        let src = Vocab::build(self.rows.iter().flat_map(|r| r.context.iter().chain(&r.source)));
        let tgt = Vocab::build(self.rows.iter().flat_map(|r| &r.target));
        (src, tgt)
    }

    pub fn encode(&self, src: &Vocab, tgt: &Vocab, max_len: usize) -> Encoded {
        let mut unknown_tokens = 0;
        let mut truncated_contexts = 0;
        let cap = max_len.saturating_sub(2);
        let examples = self
            .rows
            .iter()
            .map(|r| {
                let (mut context_ids, u1) = src.encode(&r.context);
                let (source_ids, u2) = src.encode(&r.source);
                let (target_ids, u3) = tgt.encode(&r.target);
                unknown_tokens += u1 + u2 + u3;
                if context_ids.len() > cap {
                    context_ids.truncate(cap);
                    truncated_contexts += 1;
                }
                Example {
                    example_id: r.example_id,
                    context_ids,
                    source_ids,
                    target_ids,
                    has_real_context: r.has_real_context,
                }
            })
            .collect();
        Encoded {
            examples,
            unknown_tokens,
            truncated_contexts,
        }
    }
}

/// Applies BPE to every side of every example.
pub fn build_dataset(examples: &[TextExample], bpe_src: &BpeModel, bpe_tgt: &BpeModel) -> PreparedDataset {
    let seg = |m: &BpeModel, toks: &[String]| apply_bpe(m, &toks.join(" "));
    PreparedDataset {
        rows: examples
            .iter()
            .map(|e| TextExample {
                example_id: e.example_id,
                context: seg(bpe_src, &e.context),
                source: seg(bpe_src, &e.source),
                target: seg(bpe_tgt, &e.target),
                has_real_context: e.has_real_context && !e.context.is_empty(),
            })
            .collect(),
    }
}

pub fn write_prepared(path: impl AsRef<Path>, data: &PreparedDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in &data.rows {
        if r.source.is_empty() || r.target.is_empty() {
            return Err(Error::invalid(format!("example {} has an empty source or target", r.example_id)));
        }
        writeln!(w, "{}\t{}\t{}", r.context.join(" "), r.source.join(" "), r.target.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a prepared file; example ids are 0-based line numbers.
pub fn read_prepared(path: impl AsRef<Path>) -> Result<PreparedDataset> {
    let name = path.as_ref().display().to_string();
    let reader = BufReader::new(File::open(&path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |message: &str| Error::Parse {
            path: name.clone(),
            line: i + 1,
            message: message.to_string(),
        };
        if fields.len() != 3 {
            return Err(bad("expected context<TAB>source<TAB>target"));
        }
        let split = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect::<Vec<_>>();
        let (context, source, target) = (split(fields[0]), split(fields[1]), split(fields[2]));
        if source.is_empty() || target.is_empty() {
            return Err(bad("empty source or target"));
        }
        rows.push(TextExample {
            example_id: i,
            has_real_context: !context.is_empty(),
            context,
            source,
            target,
        });
    }
    Ok(PreparedDataset { rows })
}

/// Reads a whole file into lines; used by the text-based commands.
pub(crate) fn read_lines(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}
