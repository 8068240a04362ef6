use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{MemNetError, MemNetParams, TrainConfig};
use crate::embeddings::EmbeddingTable;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Where the embeddings a model was trained with live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Path to a text embedding file.
    Reference { path: String },
    Inline { tokens: Vec<String>, vectors: Array2<f64> },
}

impl EmbeddingSource {
    pub fn inline(table: &EmbeddingTable) -> Self {
        EmbeddingSource::Inline { tokens: table.tokens().to_vec(), vectors: table.vectors().clone() }
    }

    /// The inline table, if there is one.
    pub fn table(&self) -> Option<EmbeddingTable> {
        match self {
            EmbeddingSource::Inline { tokens, vectors } => Some(EmbeddingTable::new(tokens.clone(), vectors.clone())),
            EmbeddingSource::Reference { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dim: usize,
    pub hops: usize,
    pub params: MemNetParams,
    pub embeddings: EmbeddingSource,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(params: MemNetParams, embeddings: EmbeddingSource, config: TrainConfig) -> Self {
        Checkpoint { format_version: CHECKPOINT_FORMAT_VERSION, dim: params.dim(), hops: params.n_hops(), params, embeddings, config }
    }

    fn check(&self) -> Result<(), String> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(format!("format version {} (expected {CHECKPOINT_FORMAT_VERSION})", self.format_version));
        }
        let d = self.dim;
        if self.params.n_hops() != self.hops {
            return Err(format!("header says {} hops, file has {}", self.hops, self.params.n_hops()));
        }
        if self.params.hops.iter().chain([&self.params.output]).any(|m| m.dim() != (d, d)) {
            return Err(format!("matrix shapes disagree with d={d}"));
        }
        if !self.params.is_finite() {
            return Err("non-finite parameter".into());
        }
        if let EmbeddingSource::Inline { tokens, vectors } = &self.embeddings {
            if vectors.dim() != (tokens.len(), d) {
                return Err(format!("inline embeddings are {:?}, expected ({}, {d})", vectors.dim(), tokens.len()));
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = tokens.iter().find(|t| !seen.insert(t.as_str())) {
                return Err(format!("duplicate embedding token {dup:?}"));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), MemNetError> {
    let err = |message: String| MemNetError::Checkpoint { path: path.display().to_string(), message };
    let json = serde_json::to_string(ckpt).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, MemNetError> {
    let err = |message: String| MemNetError::Checkpoint { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    ckpt.check().map_err(err)?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut params = MemNetParams::init(3, 2, 17);
        params.output[[0, 1]] = 0.1 + 0.2;
        params.hops[1][[2, 2]] = -1e-300;
        let table = EmbeddingTable::new(vec!["a".into(), "@char1".into()], array![[1.0 / 3.0, 2.0, 3.0], [f64::MIN_POSITIVE, -0.0, 7e22]]);
        let ckpt = Checkpoint::new(params, EmbeddingSource::inline(&table), TrainConfig::pretrain());
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.embeddings.table().unwrap(), table);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut ckpt = Checkpoint::new(MemNetParams::init(3, 2, 1), EmbeddingSource::Reference { path: "emb.txt".into() }, TrainConfig::finetune());
        ckpt.hops = 3;
        save_checkpoint(&path, &ckpt).unwrap();
        assert!(load_checkpoint(&path).is_err());
        ckpt.hops = 2;
        ckpt.format_version = 99;
        save_checkpoint(&path, &ckpt).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(MemNetError::Checkpoint { .. })));
    }
}
