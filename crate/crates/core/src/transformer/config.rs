use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How (and whether) the encoder sees the context sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextMode {
    /// Context-agnostic baseline.
    None,
    /// Shared-layer context encoder fused into the last source layer by a gate.
    Gated,
    /// Standard encoder over `[context ; source]` with segment flags.
    Concat,
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::None => "none",
            ContextMode::Gated => "gated",
            ContextMode::Concat => "concat",
        })
    }
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ContextMode::None),
            "gated" | "gated-context" => Ok(ContextMode::Gated),
            "concat" => Ok(ContextMode::Concat),
            other => Err(Error::config(format!("unknown context mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub max_len: usize,
    pub context_mode: ContextMode,
}

impl ModelConfig {
    /// Transformer-base sizes.
    pub fn base(src_vocab: usize, tgt_vocab: usize, context_mode: ContextMode) -> Self {
        ModelConfig {
            layers: 6,
            heads: 8,
            d_model: 512,
            d_ff: 2048,
            src_vocab,
            tgt_vocab,
            dropout: 0.1,
            label_smoothing: 0.1,
            max_len: 256,
            context_mode,
        }
    }

    /// A small model for tests and gradient checks.
    pub fn tiny(src_vocab: usize, tgt_vocab: usize, context_mode: ContextMode) -> Self {
        ModelConfig {
            layers: 2,
            heads: 2,
            d_model: 8,
            d_ff: 16,
            src_vocab,
            tgt_vocab,
            dropout: 0.0,
            label_smoothing: 0.0,
            max_len: 64,
            context_mode,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        for (name, rate) in [("dropout", self.dropout), ("label_smoothing", self.label_smoothing)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {rate}")));
            }
        }
        let specials = crate::special::COUNT;
        if self.src_vocab < specials || self.tgt_vocab < specials {
            return Err(Error::config(format!(
                "vocabularies must reserve the {specials} special symbols (including the <bos> role token)"
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "layers={}\nheads={}\nd_model={}\nd_ff={}\nsrc_vocab={}\ntgt_vocab={}\ndropout={}\nlabel_smoothing={}\nmax_len={}\ncontext_mode={}\n",
            self.layers,
            self.heads,
            self.d_model,
            self.d_ff,
            self.src_vocab,
            self.tgt_vocab,
            self.dropout,
            self.label_smoothing,
            self.max_len,
            self.context_mode
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::tiny(crate::special::COUNT, crate::special::COUNT, ContextMode::None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("malformed config line `{line}`")))?;
            let bad = || Error::config(format!("bad value for {key}: `{value}`"));
            match key {
                "layers" => cfg.layers = value.parse().map_err(|_| bad())?,
                "heads" => cfg.heads = value.parse().map_err(|_| bad())?,
                "d_model" => cfg.d_model = value.parse().map_err(|_| bad())?,
                "d_ff" => cfg.d_ff = value.parse().map_err(|_| bad())?,
                "src_vocab" => cfg.src_vocab = value.parse().map_err(|_| bad())?,
                "tgt_vocab" => cfg.tgt_vocab = value.parse().map_err(|_| bad())?,
                "max_len" => cfg.max_len = value.parse().map_err(|_| bad())?,
                "dropout" => cfg.dropout = value.parse().map_err(|_| bad())?,
                "label_smoothing" => cfg.label_smoothing = value.parse().map_err(|_| bad())?,
                "context_mode" => cfg.context_mode = value.parse()?,
                other => return Err(Error::config(format!("unknown model config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig::base(100, 120, ContextMode::Gated);
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut cfg = ModelConfig::tiny(10, 10, ContextMode::None);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_vocab_without_role_token() {
        let cfg = ModelConfig::tiny(2, 10, ContextMode::Gated);
        assert!(cfg.validate().is_err());
    }
}
