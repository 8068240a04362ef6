//! Passage retrieval over character-normalized books.
//!
//! Books are cut into non-overlapping windows of [`WINDOW_SIZE`] sentences.
//! Each window has two fields: ordinary tokens and `@charN` tokens. Windows
//! are ranked with a weighted-field BM25F, or with scores from an external
//! relevance model, and the best windows fill a sentence budget.

mod bm25f;
mod context;
mod external;
mod index;
mod window;

use thiserror::Error;

pub use bm25f::{bm25f_score, query_terms, Bm25Config};
pub use context::{select_context, RankedContext};
pub use external::{load_external_scores, parse_external_scores, ExternalScores};
pub use index::{PassageIndex, Posting, ScoredWindow, INDEX_FORMAT_VERSION};
pub use window::{make_windows, PassageWindow, WINDOW_SIZE};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("book {0} is not in the index")]
    UnknownBook(String),
    #[error("question {0} has no external scores")]
    UnscoredQuestion(String),
    #[error("question {question_id}: book {book_id} has no window starting at sentence {start}")]
    UnknownWindow { question_id: String, book_id: String, start: usize },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index snapshot {path}: {message}")]
    Snapshot { path: String, message: String },
}
