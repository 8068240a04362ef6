use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{PassageIndex, PassageWindow};
use crate::corpus::NormalizedText;

/// Weighted-field BM25F parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Config {
    pub k1: f64,
    pub b_text: f64,
    pub b_char: f64,
    pub w_text: f64,
    pub w_char: f64,
}

impl Default for Bm25Config {
    fn default() -> Self {
        // character field up-weighted: Who-questions hinge on character ids
        Bm25Config { k1: 1.2, b_text: 0.75, b_char: 0.75, w_text: 1.0, w_char: 2.0 }
    }
}

impl Bm25Config {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(format!("k1 must be positive, got {}", self.k1));
        }
        for (name, b) in [("b_text", self.b_text), ("b_char", self.b_char)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(format!("{name} must lie in [0, 1], got {b}"));
            }
        }
        for (name, w) in [("w_text", self.w_text), ("w_char", self.w_char)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("{name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }

    /// Field-weighted, length-normalized pseudo term frequency.
    pub(crate) fn pseudo_tf(&self, tf: (u32, u32), len: (u32, u32), avg: (f64, f64)) -> f64 {
        let field = |tf: u32, len: u32, avg: f64, b: f64, w: f64| {
            if tf == 0 {
                0.0
            } else {
                w * tf as f64 / (1.0 + b * (len as f64 / avg - 1.0))
            }
        };
        field(tf.0, len.0, avg.0, self.b_text, self.w_text) + field(tf.1, len.1, avg.1, self.b_char, self.w_char)
    }

    pub(crate) fn saturate(&self, x: f64) -> f64 {
        x / (self.k1 + x)
    }
}

fn is_punctuation(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()))
}

/// Distinct scoring terms of a query, sorted: the token "who" and standalone
/// punctuation are dropped.
pub fn query_terms(query: &NormalizedText) -> Vec<&str> {
    query
        .tokens
        .iter()
        .map(String::as_str)
        .filter(|t| *t != "who" && !is_punctuation(t))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Scores one window directly from its term counts.
pub fn bm25f_score(index: &PassageIndex, query: &NormalizedText, window: &PassageWindow) -> f64 {
    let cfg = index.config();
    let len = (window.text_len(), window.char_len());
    let avg = index.avg_lengths();
    let mut score = 0.0;
    for term in query_terms(query) {
        let tf = window.tf(term);
        if tf == (0, 0) {
            continue;
        }
        score += index.idf(term) * cfg.saturate(cfg.pseudo_tf(tf, len, avg));
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_preprocessing() {
        let q = NormalizedText::new(
            ["who", "killed", "@char3", "?", "killed", "the", "--", "o'neil"].iter().map(|s| s.to_string()).collect(),
        );
        assert_eq!(query_terms(&q), ["@char3", "killed", "o'neil", "the"]);
    }

    #[test]
    fn config_validation() {
        assert!(Bm25Config::default().validate().is_ok());
        assert!(Bm25Config { k1: 0.0, ..Default::default() }.validate().is_err());
        assert!(Bm25Config { b_char: 1.5, ..Default::default() }.validate().is_err());
        assert!(Bm25Config { w_text: -1.0, ..Default::default() }.validate().is_err());
    }
}
