use std::fmt;

use bookqa_core::corpus::CorpusError;
use bookqa_core::embeddings::EmbeddingError;
use bookqa_core::harness::HarnessError;
use bookqa_core::memnet::MemNetError;
use bookqa_core::retrieval::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Config,
    Data,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Usage | Kind::Config => 1,
            Kind::Data => 2,
            Kind::Runtime => 3,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Runtime => "runtime",
        }
    }
}

/// A failure that ends the process: printed as one `error[kind]: ...` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        // keep the report on one line
        let message = message.into().replace('\n', " ");
        CliError { kind, message }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::new(Kind::Runtime, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.as_str(), self.message)
    }
}

// A path that cannot be read is a configuration problem; unreadable
// contents are a data problem.

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Io { .. } | EmbeddingError::Config(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Io { .. } => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => CliError::config(e.to_string()),
            HarnessError::TooFewBooks { .. } | HarnessError::Data(_) => CliError::data(e.to_string()),
            HarnessError::Stage { .. } => CliError::runtime(e.to_string()),
        }
    }
}

impl From<MemNetError> for CliError {
    fn from(e: MemNetError) -> Self {
        match e {
            MemNetError::Config(_) => CliError::config(e.to_string()),
            MemNetError::Checkpoint { .. } | MemNetError::Instance(_) | MemNetError::EmptyDataset => CliError::data(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}
