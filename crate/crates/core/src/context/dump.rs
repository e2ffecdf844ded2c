//! Attention dump: one tab-separated record per example,
//! `id <TAB> source tokens <TAB> context tokens <TAB> S×C weights`,
//! tokens and weights space-separated, weights row-major.

use std::io::{BufRead, Write};

use crate::analysis::AttentionRecord;
use crate::autodiff::{Scalar, Tape};
use crate::data::{Example, Vocab};
use crate::error::{Error, Result};
use crate::transformer::{model_context, model_source, Model, Padded};

/// Head-averaged source→context attention of a gated model, one record per
/// example. Examples are encoded `batch_size` at a time.
pub fn attention_records<T: Scalar>(
    model: &Model<T>,
    examples: &[Example],
    src_vocab: &Vocab,
    batch_size: usize,
) -> Result<Vec<AttentionRecord>> {
    if model.gated_top.is_none() {
        return Err(Error::config("attention dumps need a gated context-aware model"));
    }
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let src: Vec<Vec<usize>> = chunk.iter().map(|e| model_source(&e.source_ids)).collect();
        let ctx: Vec<Vec<usize>> = chunk.iter().map(|e| model_context(&e.context_ids)).collect();
        let mut tape = Tape::eval();
        let enc = model.encode_batch(&mut tape, &Padded::from_seqs(&src), &Padded::from_seqs(&ctx))?;
        for (row, ex) in chunk.iter().enumerate() {
            let state = model.detach(&tape, &enc, row);
            let weights = state
                .context_attention
                .expect("gated encoding always carries context attention")
                .iter()
                .map(|w| w.as_f64())
                .collect();
            out.push(AttentionRecord {
                example_id: ex.example_id,
                src_tokens: state.source_tokens.iter().map(|&i| src_vocab.symbol(i).to_string()).collect(),
                ctx_tokens: state.context_tokens.iter().map(|&i| src_vocab.symbol(i).to_string()).collect(),
                weights,
            });
        }
    }
    Ok(out)
}

pub struct AttentionDumpWriter<W: Write> {
    inner: W,
}

impl<W: Write> AttentionDumpWriter<W> {
    pub fn new(inner: W) -> Self {
        AttentionDumpWriter { inner }
    }

    pub fn write(&mut self, record: &AttentionRecord) -> Result<()> {
        writeln!(self.inner, "{}", record.to_line())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes every record, one per line.
pub fn dump_attention<W: Write>(out: W, records: &[AttentionRecord]) -> Result<()> {
    let mut w = AttentionDumpWriter::new(out);
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a dump back; `path` is only used in error messages.
pub fn read_attention_dump<R: BufRead>(input: R, path: &str) -> Result<Vec<AttentionRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(AttentionRecord::from_line(&line).map_err(|message| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}
