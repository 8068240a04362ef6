use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bm25f::query_terms;
use super::external::ExternalScores;
use super::{make_windows, Bm25Config, PassageWindow, RetrievalError};
use crate::corpus::{NormalizedBook, NormalizedText};
use crate::par;

pub const INDEX_FORMAT_VERSION: u32 = 1;

/// Occurrence of a term in one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub window: u32,
    pub tf_text: u32,
    pub tf_char: u32,
}

/// A ranked window, without its term counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub start: usize,
    pub sentence_indices: Vec<usize>,
    pub score: f64,
}

/// Inverted index over the passage windows of a set of books.
///
/// Windows of one book occupy a contiguous range of window ids, so postings
/// (sorted by window id) can be sliced per book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageIndex {
    format_version: u32,
    config: Bm25Config,
    windows: Vec<PassageWindow>,
    books: BTreeMap<String, (usize, usize)>,
    postings: BTreeMap<String, Vec<Posting>>,
    avg_len_text: f64,
    avg_len_char: f64,
}

impl PassageIndex {
    pub fn build(books: &[NormalizedBook], config: Bm25Config) -> Self {
        let per_book = par::map(books, |b| (b.book_id.clone(), make_windows(b)));
        Self::from_windows(per_book, config)
    }

    /// Indexes precomputed windows, grouped by book in index order.
    pub fn from_windows(per_book: Vec<(String, Vec<PassageWindow>)>, config: Bm25Config) -> Self {
        let mut windows = Vec::new();
        let mut ranges = BTreeMap::new();
        for (book_id, ws) in per_book {
            let start = windows.len();
            windows.extend(ws);
            ranges.insert(book_id, (start, windows.len()));
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (wi, w) in windows.iter().enumerate() {
            let mut merged: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
            for (t, &c) in &w.field_text {
                merged.entry(t).or_default().0 = c;
            }
            for (t, &c) in &w.field_char {
                merged.entry(t).or_default().1 = c;
            }
            for (t, (tf_text, tf_char)) in merged {
                postings.entry(t.to_string()).or_default().push(Posting { window: wi as u32, tf_text, tf_char });
            }
        }

        let mean = |f: fn(&PassageWindow) -> u32| {
            if windows.is_empty() {
                return 1.0;
            }
            let m = windows.iter().map(|w| f(w) as f64).sum::<f64>() / windows.len() as f64;
            // A field that is empty everywhere has nothing to normalize.
            if m > 0.0 { m } else { 1.0 }
        };
        let avg_len_text = mean(PassageWindow::text_len);
        let avg_len_char = mean(PassageWindow::char_len);

        PassageIndex {
            format_version: INDEX_FORMAT_VERSION,
            config,
            windows,
            books: ranges,
            postings,
            avg_len_text,
            avg_len_char,
        }
    }

    pub fn config(&self) -> &Bm25Config {
        &self.config
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_lengths(&self) -> (f64, f64) {
        (self.avg_len_text, self.avg_len_char)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_windows() as f64;
        let nt = self.doc_freq(term) as f64;
        (1.0 + (n - nt + 0.5) / (nt + 0.5)).ln()
    }

    pub fn book_ids(&self) -> impl Iterator<Item = &str> {
        self.books.keys().map(String::as_str)
    }

    pub fn book_windows(&self, book_id: &str) -> Option<&[PassageWindow]> {
        self.books.get(book_id).map(|&(a, b)| &self.windows[a..b])
    }

    /// Scores every window of a book through the postings lists.
    pub fn score_book(&self, book_id: &str, query: &NormalizedText) -> Result<Vec<f64>, RetrievalError> {
        let &(lo, hi) = self.books.get(book_id).ok_or_else(|| RetrievalError::UnknownBook(book_id.to_string()))?;
        let avg = self.avg_lengths();
        let mut acc = vec![0.0; hi - lo];
        for term in query_terms(query) {
            let plist = self.postings(term);
            if plist.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            let first = plist.partition_point(|p| (p.window as usize) < lo);
            for p in plist[first..].iter().take_while(|p| (p.window as usize) < hi) {
                let w = &self.windows[p.window as usize];
                let x = self.config.pseudo_tf((p.tf_text, p.tf_char), (w.text_len(), w.char_len()), avg);
                acc[p.window as usize - lo] += idf * self.config.saturate(x);
            }
        }
        Ok(acc)
    }

    /// Top `n` windows of one book by BM25F, ties to the earlier window.
    pub fn retrieve(&self, book_id: &str, query: &NormalizedText, n: usize) -> Result<Vec<ScoredWindow>, RetrievalError> {
        let scores = self.score_book(book_id, query)?;
        let windows = self.book_windows(book_id).unwrap_or_default();
        Ok(rank(windows.iter().zip(scores), n))
    }

    /// Top `n` windows ranked by externally supplied scores. Only windows
    /// present in the table are candidates.
    pub fn retrieve_external(
        &self,
        table: &ExternalScores,
        question_id: &str,
        book_id: &str,
        n: usize,
    ) -> Result<Vec<ScoredWindow>, RetrievalError> {
        let windows = self.book_windows(book_id).ok_or_else(|| RetrievalError::UnknownBook(book_id.to_string()))?;
        let entries = table
            .for_question(question_id)
            .ok_or_else(|| RetrievalError::UnscoredQuestion(question_id.to_string()))?;
        let mut scored = Vec::new();
        for (b, start, score) in entries {
            if b != book_id {
                continue;
            }
            let w = windows.iter().find(|w| w.start == *start).ok_or_else(|| RetrievalError::UnknownWindow {
                question_id: question_id.to_string(),
                book_id: book_id.to_string(),
                start: *start,
            })?;
            scored.push((w, *score));
        }
        Ok(rank(scored, n))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| RetrievalError::Snapshot {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        fs::write(path, json).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let snap_err = |message: String| RetrievalError::Snapshot { path: path.display().to_string(), message };
        let text = fs::read_to_string(path).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| snap_err(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == INDEX_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(snap_err(format!("unsupported format version {v}"))),
            None => return Err(snap_err("missing format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| snap_err(e.to_string()))
    }
}

fn rank<'a>(scored: impl IntoIterator<Item = (&'a PassageWindow, f64)>, n: usize) -> Vec<ScoredWindow> {
    let mut v: Vec<(&PassageWindow, f64)> = scored.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.start.cmp(&b.0.start)));
    v.into_iter()
        .take(n)
        .map(|(w, score)| ScoredWindow { start: w.start, sentence_indices: w.sentence_indices.clone(), score })
        .collect()
}
