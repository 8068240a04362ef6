//! Key-value memory network with a per-book candidate output layer.
//!
//! Keys are averaged sentence embeddings, values are averaged embeddings of
//! the characters each sentence mentions (zero when none), and candidates are
//! the embeddings of the current book's characters. Each hop attends over
//! keys with sparsemax, reads the values, and adds the read vector to the
//! query. The last read vector goes through the output matrix and is scored
//! against every candidate by dot product.
//!
//! Gradients are derived by hand and checked against finite differences in
//! the tests.

mod adam;
mod checkpoint;
mod instance;
mod model;
mod sparsemax;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, EmbeddingSource, CHECKPOINT_FORMAT_VERSION};
pub use instance::{build_instance, InstanceTokens, MemNetInstance};
pub use model::{forward, gradients, nll_loss, predict, ForwardTrace, MemNetGrads, MemNetParams};
pub use sparsemax::{sparsemax, sparsemax_backward};
pub use train::{lr_at_epoch, train, train_instances, TrainConfig, TrainLog, TrainMode};

#[derive(Debug, Error)]
pub enum MemNetError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("non-finite gradient; batch rejected")]
    NonFiniteGradient,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteUpdate { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}
