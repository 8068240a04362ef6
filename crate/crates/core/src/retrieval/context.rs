use serde::{Deserialize, Serialize};

use super::ScoredWindow;

/// Windows chosen for one question and their sentences in book order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedContext {
    pub question_id: String,
    pub windows: Vec<ScoredWindow>,
    pub sentences: Vec<usize>,
}

/// Takes windows in rank order while they fit the sentence budget. A window
/// that would overflow is skipped; later, shorter windows may still fit.
pub fn select_context(question_id: &str, ranked: &[ScoredWindow], budget_sentences: usize) -> RankedContext {
    let mut windows = Vec::new();
    let mut sentences = Vec::new();
    for w in ranked {
        if sentences.len() + w.sentence_indices.len() > budget_sentences {
            continue;
        }
        sentences.extend_from_slice(&w.sentence_indices);
        windows.push(w.clone());
    }
    sentences.sort_unstable();
    sentences.dedup();
    RankedContext { question_id: question_id.to_string(), windows, sentences }
}
