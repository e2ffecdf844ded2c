use crate::error::{Error, Result};

/// Head-averaged source→context attention for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub example_id: usize,
    pub src_tokens: Vec<String>,
    pub ctx_tokens: Vec<String>,
    /// Row-major `src_tokens.len() × ctx_tokens.len()`.
    pub weights: Vec<f64>,
}

impl AttentionRecord {
    pub fn rows(&self) -> usize {
        self.src_tokens.len()
    }

    pub fn cols(&self) -> usize {
        self.ctx_tokens.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.weights[i * c..(i + 1) * c]
    }

    /// Dimensions agree with the token lists and every row sums to 1 within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.weights.len() != self.rows() * self.cols() {
            return Err(Error::invalid(format!(
                "record {}: {} weights for {}×{} tokens",
                self.example_id,
                self.weights.len(),
                self.rows(),
                self.cols()
            )));
        }
        for i in 0..self.rows() {
            let s: f64 = self.row(i).iter().sum();
            if (s - 1.0).abs() > tol || self.row(i).iter().any(|&w| w < 0.0) {
                return Err(Error::invalid(format!("record {}: row {i} sums to {s}", self.example_id)));
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        let w: Vec<String> = self.weights.iter().map(|x| format!("{}", *x as f32)).collect();
        format!(
            "{}\t{}\t{}\t{}",
            self.example_id,
            self.src_tokens.join(" "),
            self.ctx_tokens.join(" "),
            w.join(" ")
        )
    }

    pub fn from_line(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(format!("expected 4 tab-separated fields, found {}", f.len()));
        }
        let example_id = f[0].parse().map_err(|_| format!("bad example id `{}`", f[0]))?;
        let words = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(String::from).collect::<Vec<_>>();
        let weights = f[3]
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad weight `{t}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let rec = AttentionRecord {
            example_id,
            src_tokens: words(f[1]),
            ctx_tokens: words(f[2]),
            weights,
        };
        if rec.weights.len() != rec.rows() * rec.cols() {
            return Err(format!(
                "{} weights for {}×{} tokens",
                rec.weights.len(),
                rec.rows(),
                rec.cols()
            ));
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let r = AttentionRecord {
            example_id: 3,
            src_tokens: vec!["it".into(), "<eos>".into()],
            ctx_tokens: vec!["<bos>".into(), "cat".into()],
            weights: vec![0.25, 0.75, 0.5, 0.5],
        };
        let line = r.to_line();
        assert_eq!(line, "3\tit <eos>\t<bos> cat\t0.25 0.75 0.5 0.5");
        assert_eq!(AttentionRecord::from_line(&line).unwrap(), r);
        r.validate(1e-4).unwrap();
        assert!(AttentionRecord::from_line("3\tit\tcat\t0.5 0.5").is_err());
    }
}
