//! Skip-gram word vectors over normalized book text.
//!
//! Character ids (`@charN`) are ordinary tokens here. Everything downstream
//! encodes text by averaging vectors with [`avg_embed`].

mod io;
mod sgns;
mod vocab;

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use io::{load_embeddings, save_embeddings};
pub use sgns::{train_skipgram, SgnsConfig};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vocabulary is empty after applying min_count={0}")]
    EmptyVocabulary(u64),
    #[error("invalid skip-gram configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("token {0:?} contains whitespace and cannot be written")]
    UnwritableToken(String),
}

/// Token vectors, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    /// Panics when `tokens` and `vectors` disagree in length or tokens repeat.
    pub fn new(tokens: Vec<String>, vectors: Array2<f64>) -> Self {
        assert_eq!(tokens.len(), vectors.nrows(), "one vector per token");
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        assert_eq!(index.len(), tokens.len(), "duplicate tokens");
        EmbeddingTable { tokens, index, vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.id(token).map(|i| self.vectors.row(i))
    }

    pub fn row(&self, id: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(id)
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Array2<f64> {
        &mut self.vectors
    }

    /// Adds any missing tokens with small random vectors (uniform in
    /// ±0.5/d, the skip-gram input initialization). Returns how many were added.
    pub fn ensure_tokens<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>, seed: u64) -> usize {
        let missing: Vec<String> = {
            let mut seen = std::collections::HashSet::new();
            tokens
                .into_iter()
                .filter(|t| !self.index.contains_key(*t) && seen.insert(*t))
                .map(String::from)
                .collect()
        };
        if missing.is_empty() {
            return 0;
        }
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extra = Array2::from_shape_fn((missing.len(), d), |_| (rng.random::<f64>() - 0.5) / d as f64);
        let mut vectors = Array2::zeros((self.len() + missing.len(), d));
        vectors.slice_mut(ndarray::s![..self.len(), ..]).assign(&self.vectors);
        vectors.slice_mut(ndarray::s![self.len().., ..]).assign(&extra);
        for t in &missing {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t.clone());
        }
        self.vectors = vectors;
        missing.len()
    }
}

/// Mean of the vectors of in-vocabulary tokens; zero when none are known.
pub fn avg_embed<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Array1<f64> {
    let mut sum = Array1::zeros(table.dim());
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            sum += &v;
            n += 1;
        }
    }
    if n > 0 {
        sum /= n as f64;
    }
    sum
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let denom = (a.dot(&a) * b.dot(&b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(&b) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::new(
            vec!["a".into(), "b".into(), "@char1".into()],
            array![[1.0, 2.0, 3.0], [3.0, 0.0, -1.0], [0.5, 0.5, 0.5]],
        )
    }

    #[test]
    fn avg_of_single_token_is_its_vector() {
        let t = table();
        assert_eq!(avg_embed(&["a"], &t), array![1.0, 2.0, 3.0]);
    }

    #[test]
    fn avg_of_two() {
        let t = table();
        assert_eq!(avg_embed(&["a", "b"], &t), array![2.0, 1.0, 1.0]);
    }

    #[test]
    fn oov_gives_zero() {
        let t = table();
        assert_eq!(avg_embed(&["zzz_unknown"], &t), Array1::<f64>::zeros(3));
        assert_eq!(avg_embed::<&str>(&[], &t), Array1::<f64>::zeros(3));
        assert_eq!(avg_embed(&["zzz", "b"], &t), array![3.0, 0.0, -1.0]);
    }

    #[test]
    fn ensure_tokens_appends_missing() {
        let mut t = table();
        assert_eq!(t.ensure_tokens(["a", "@char9", "@char9", "@char8"], 1), 2);
        assert_eq!(t.len(), 5);
        assert_eq!(t.id("@char9"), Some(3));
        assert_eq!(t.get("a").unwrap(), array![1.0, 2.0, 3.0]);
        assert!(t.get("@char8").unwrap().iter().all(|x| x.abs() <= 0.5 / 3.0));
        assert_eq!(t.ensure_tokens(["a"], 1), 0);
    }

    proptest! {
        #[test]
        fn avg_is_count_weighted_mean(picks in prop::collection::vec(0usize..4, 0..20)) {
            let t = table();
            let names = ["a", "b", "@char1", "oov"];
            let tokens: Vec<&str> = picks.iter().map(|&i| names[i]).collect();
            let got = avg_embed(&tokens, &t);
            prop_assert_eq!(got.len(), 3);
            // brute force: count each distinct known token, weight its vector
            let mut sum = Array1::<f64>::zeros(3);
            let mut total = 0usize;
            for name in &names[..3] {
                let c = tokens.iter().filter(|x| *x == name).count();
                sum = sum + &t.get(name).unwrap().to_owned() * c as f64;
                total += c;
            }
            if total > 0 {
                sum /= total as f64;
            }
            for (g, e) in got.iter().zip(sum.iter()) {
                prop_assert!((g - e).abs() < 1e-12);
            }
        }
    }
}
