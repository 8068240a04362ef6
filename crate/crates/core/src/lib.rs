//! Question answering over the full text of books.
//!
//! The pipeline answers "Who" questions whose answers are book characters:
//!
//! 1. [`corpus`] loads character-annotated books and questions and collapses
//!    every character mention (pronouns included) into an `@charN` token.
//! 2. [`retrieval`] ranks 5-sentence passage windows with a two-field BM25F
//!    and selects a sentence budget as context.
//! 3. [`embeddings`] trains skip-gram vectors over the normalized text.
//! 4. [`memnet`] answers with a multi-hop key-value memory network whose
//!    output layer scores the characters of the current book.
//! 5. [`artifgen`] produces artificial questions from dependency trees for
//!    pretraining.
//! 6. [`harness`] runs baselines, cross-validation, sweeps and gating.
//!
//! Data-parallel loops (batch gradients, folds and trials, per-question
//! retrieval) run on rayon when the `parallel` feature is on and fall back to
//! plain iterators otherwise. Results are identical either way.

pub mod artifgen;
pub mod corpus;
pub mod embeddings;
pub mod harness;
pub mod memnet;
pub mod par;
pub mod retrieval;
pub mod seeds;
pub mod synth;

pub use corpus::{AnnotatedBook, CharacterId, NormalizedText, QaExample};
pub use embeddings::EmbeddingTable;
pub use memnet::{MemNetParams, TrainConfig};
pub use retrieval::{Bm25Config, PassageIndex};
