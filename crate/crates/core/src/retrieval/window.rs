use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_character_token, NormalizedBook};

/// Sentences per passage window.
pub const WINDOW_SIZE: usize = 5;

/// Up to five consecutive sentences with per-field term counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageWindow {
    pub book_id: String,
    pub start: usize,
    pub sentence_indices: Vec<usize>,
    pub field_text: BTreeMap<String, u32>,
    pub field_char: BTreeMap<String, u32>,
}

impl PassageWindow {
    pub fn text_len(&self) -> u32 {
        self.field_text.values().sum()
    }

    pub fn char_len(&self) -> u32 {
        self.field_char.values().sum()
    }

    pub fn tf(&self, term: &str) -> (u32, u32) {
        (
            self.field_text.get(term).copied().unwrap_or(0),
            self.field_char.get(term).copied().unwrap_or(0),
        )
    }
}

/// Cuts a book into stride-5 windows; the last may be shorter.
pub fn make_windows(book: &NormalizedBook) -> Vec<PassageWindow> {
    book.sentences
        .chunks(WINDOW_SIZE)
        .enumerate()
        .map(|(w, chunk)| {
            let start = w * WINDOW_SIZE;
            let mut field_text = BTreeMap::new();
            let mut field_char = BTreeMap::new();
            for tok in chunk.iter().flat_map(|s| &s.tokens) {
                let field = if is_character_token(tok) { &mut field_char } else { &mut field_text };
                *field.entry(tok.clone()).or_insert(0) += 1;
            }
            PassageWindow {
                book_id: book.book_id.clone(),
                start,
                sentence_indices: (start..start + chunk.len()).collect(),
                field_text,
                field_char,
            }
        })
        .collect()
}
