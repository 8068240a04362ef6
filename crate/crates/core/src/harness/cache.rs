use std::any::Any;
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the canonical JSON of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("hashable values serialize");
    hex::encode(Sha256::digest(&json))
}

/// Hex SHA-256 over several byte strings, length-prefixed so that
/// boundaries matter.
pub fn hash_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub hits: u64,
    pub misses: u64,
}

type Slot = Arc<dyn Any + Send + Sync>;

/// Memoizes pipeline stages by (stage, content key).
#[derive(Default)]
pub struct StageCache {
    entries: Mutex<HashMap<(String, String), Slot>>,
    counts: Mutex<BTreeMap<String, StageCounts>>,
}

impl StageCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cached value or computes and stores it. The lock is not
    /// held while `compute` runs, so two racing callers may both compute;
    /// the first stored value wins.
    pub fn get_or_try_insert<T, E>(&self, stage: &str, key: &str, compute: impl FnOnce() -> Result<T, E>) -> Result<Arc<T>, E>
    where
        T: Send + Sync + 'static,
    {
        let k = (stage.to_string(), key.to_string());
        let found = self.entries.lock().expect("cache lock").get(&k).cloned();
        if let Some(slot) = found {
            self.bump(stage, true);
            return Ok(slot.downcast::<T>().expect("one type per stage"));
        }
        self.bump(stage, false);
        let value: Slot = Arc::new(compute()?);
        let stored = self.entries.lock().expect("cache lock").entry(k).or_insert(value).clone();
        Ok(stored.downcast::<T>().expect("one type per stage"))
    }

    fn bump(&self, stage: &str, hit: bool) {
        let mut counts = self.counts.lock().expect("cache lock");
        let c = counts.entry(stage.to_string()).or_default();
        if hit {
            c.hits += 1;
        } else {
            c.misses += 1;
        }
    }

    pub fn counts(&self, stage: &str) -> StageCounts {
        self.counts.lock().expect("cache lock").get(stage).copied().unwrap_or_default()
    }

    pub fn all_counts(&self) -> BTreeMap<String, StageCounts> {
        self.counts.lock().expect("cache lock").clone()
    }
}
