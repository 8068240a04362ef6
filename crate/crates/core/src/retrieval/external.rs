use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{RetrievalError, WINDOW_SIZE};

#[derive(Deserialize)]
struct ScoreLine {
    question_id: String,
    book_id: String,
    window_start: usize,
    score: f64,
}

/// Relevance scores from an external context selector, keyed by question.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    by_question: BTreeMap<String, Vec<(String, usize, f64)>>,
}

impl ExternalScores {
    pub fn for_question(&self, question_id: &str) -> Option<&[(String, usize, f64)]> {
        self.by_question.get(question_id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, question_id: &str, book_id: &str, window_start: usize, score: f64) {
        self.by_question.entry(question_id.to_string()).or_default().push((book_id.to_string(), window_start, score));
    }

    /// All rows as (question, book, window start, score), ordered by question.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, usize, f64)> {
        self.by_question.iter().flat_map(|(q, rows)| rows.iter().map(move |(b, s, x)| (q.as_str(), b.as_str(), *s, *x)))
    }

    pub fn len(&self) -> usize {
        self.by_question.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_question.is_empty()
    }
}

pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores, RetrievalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })?;
    parse_external_scores(&text, &path.display().to_string())
}

pub fn parse_external_scores(text: &str, origin: &str) -> Result<ExternalScores, RetrievalError> {
    let mut table = ExternalScores::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RetrievalError::Parse { path: origin.to_string(), line: i + 1, message };
        let l: ScoreLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        // Windows are stride-aligned, the final partial one included.
        if !l.window_start.is_multiple_of(WINDOW_SIZE) {
            return Err(err(format!("window_start {} is not a window boundary", l.window_start)));
        }
        if !l.score.is_finite() {
            return Err(err(format!("non-finite score {}", l.score)));
        }
        table.insert(&l.question_id, &l.book_id, l.window_start, l.score);
    }
    Ok(table)
}
