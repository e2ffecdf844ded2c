use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Masc,
    Fem,
    Neut,
    Plur,
}

impl Gender {
    pub const ALL: [Gender; 4] = [Gender::Masc, Gender::Fem, Gender::Neut, Gender::Plur];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["masc", "fem", "neut", "plur"][self.index()]
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "masc" | "m" | "masc." => Ok(Gender::Masc),
            "fem" | "f" | "fem." => Ok(Gender::Fem),
            "neut" | "n" | "neuter" => Ok(Gender::Neut),
            "plur" | "pl" | "plural" => Ok(Gender::Plur),
            other => Err(Error::invalid(format!("unknown gender label `{other}`"))),
        }
    }
}

/// A pronoun in the source linked to an antecedent in the context.
///
/// Context indices are positions in the model-side context sequence, where
/// position 0 is `<bos>`; source indices are plain token positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorefAnnotation {
    pub example_id: usize,
    pub pronoun: String,
    pub pronoun_index: usize,
    /// Inclusive `[start, end]`.
    pub antecedent_span: (usize, usize),
    pub antecedent_has_noun: bool,
    pub context_noun_count: usize,
    pub gender: Option<Gender>,
    /// Positions of all nouns in the context, ascending.
    pub noun_positions: Vec<usize>,
}

impl CorefAnnotation {
    pub fn span_contains(&self, index: usize) -> bool {
        (self.antecedent_span.0..=self.antecedent_span.1).contains(&index)
    }

    /// Tab-separated fields in declaration order; `-` marks an absent gender
    /// or an empty noun list.
    pub fn to_line(&self) -> String {
        let nouns = if self.noun_positions.is_empty() {
            "-".to_string()
        } else {
            self.noun_positions.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.example_id,
            self.pronoun,
            self.pronoun_index,
            self.antecedent_span.0,
            self.antecedent_span.1,
            u8::from(self.antecedent_has_noun),
            self.context_noun_count,
            self.gender.map_or("-", Gender::label),
            nouns
        )
    }

    pub fn from_line(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(format!("expected 9 tab-separated fields, found {}", f.len()));
        }
        let num = |i: usize, what: &str| f[i].trim().parse::<usize>().map_err(|_| format!("bad {what} `{}`", f[i]));
        let has_noun = match f[5].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(format!("bad has_noun flag `{other}`")),
        };
        let gender = match f[7].trim() {
            "-" | "" => None,
            g => Some(g.parse::<Gender>().map_err(|e| e.to_string())?),
        };
        let noun_positions = match f[8].trim() {
            "-" | "" => Vec::new(),
            s => s
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad noun position `{p}`")))
                .collect::<std::result::Result<_, _>>()?,
        };
        let ann = CorefAnnotation {
            example_id: num(0, "example id")?,
            pronoun: f[1].trim().to_string(),
            pronoun_index: num(2, "pronoun index")?,
            antecedent_span: (num(3, "span start")?, num(4, "span end")?),
            antecedent_has_noun: has_noun,
            context_noun_count: num(6, "noun count")?,
            gender,
            noun_positions,
        };
        ann.validate()?;
        Ok(ann)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.antecedent_span.0 > self.antecedent_span.1 {
            return Err("antecedent span start exceeds end".into());
        }
        if self.gender.is_some() && !self.antecedent_has_noun {
            return Err("gender label on an antecedent without a noun".into());
        }
        if !self.noun_positions.is_empty() && self.noun_positions.len() != self.context_noun_count {
            return Err("noun position list disagrees with noun count".into());
        }
        Ok(())
    }
}

pub fn write_annotations(path: impl AsRef<Path>, annotations: &[CorefAnnotation]) -> Result<()> {
    let text: String = annotations.iter().map(|a| a.to_line() + "\n").collect();
    fs::write(path, text)?;
    Ok(())
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<CorefAnnotation>> {
    let name = path.as_ref().display().to_string();
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            CorefAnnotation::from_line(l).map_err(|message| Error::Parse {
                path: name.clone(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let a = CorefAnnotation {
            example_id: 4,
            pronoun: "it".into(),
            pronoun_index: 2,
            antecedent_span: (1, 2),
            antecedent_has_noun: true,
            context_noun_count: 2,
            gender: Some(Gender::Fem),
            noun_positions: vec![2, 8],
        };
        assert_eq!(a.to_line(), "4\tit\t2\t1\t2\t1\t2\tfem\t2,8");
        assert_eq!(CorefAnnotation::from_line(&a.to_line()).unwrap(), a);
        let b = CorefAnnotation {
            gender: None,
            antecedent_has_noun: false,
            noun_positions: vec![],
            context_noun_count: 0,
            ..a.clone()
        };
        assert_eq!(CorefAnnotation::from_line(&b.to_line()).unwrap(), b);
        assert!(CorefAnnotation::from_line("1\tit\t0\t3\t1\t1\t1\t-\t-").is_err());
        assert!(CorefAnnotation::from_line("1\tit\t0\t1\t1\t0\t1\tfem\t-").is_err());
    }
}
