use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::special::{self, UNK};

/// Symbol table. The reserved specials occupy the first ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < special::COUNT || symbols[..special::COUNT] != special::SYMBOLS {
            return Err(Error::invalid("vocabulary must start with <pad> <unk> <bos> <eos>"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary symbol `{s}`")));
            }
        }
        Ok(Vocab { symbols, index })
    }

    /// Specials first, then symbols by descending count, ties alphabetical.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            let t = t.as_ref();
            if !special::is_special(t) {
                *counts.entry(t.to_string()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let symbols = special::SYMBOLS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(s, _)| s))
            .collect();
        Vocab::from_symbols(symbols).expect("specials are unique")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Symbol for `id`; out-of-range ids render as `<unk>`.
    pub fn symbol(&self, id: usize) -> &str {
        self.symbols.get(id).map_or(special::UNK_STR, String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Maps tokens to ids; returns the ids and the number of unknown tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<usize>, usize) {
        let mut unk = 0;
        let ids = tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref()).unwrap_or_else(|| {
                    unk += 1;
                    UNK
                })
            })
            .collect();
        (ids, unk)
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.symbol(i).to_string()).collect()
    }

    /// One symbol per line; line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.symbols.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Vocab::from_symbols(text.lines().map(str::to_string).collect())
    }
}
