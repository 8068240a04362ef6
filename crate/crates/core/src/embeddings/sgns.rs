use ndarray::{Array1, Array2};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingTable, Vocab};
use crate::corpus::NormalizedText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Maximum context radius; each center word samples a radius in 1..=window.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_count: u64,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsample_t: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            min_count: 5,
            subsample_t: 1e-4,
            seed: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.subsample_t >= 0.0) {
            return bad("subsample_t must be non-negative");
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling, single worker.
///
/// The learning rate decays linearly with the number of processed tokens
/// down to `1e-4 * initial_lr`. Output is a deterministic function of the
/// corpus and config.
pub fn train_skipgram<'a>(
    corpus: impl IntoIterator<Item = &'a NormalizedText>,
    cfg: &SgnsConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    cfg.validate()?;
    let corpus: Vec<&NormalizedText> = corpus.into_iter().collect();
    let vocab = Vocab::build(corpus.iter().copied(), cfg.min_count).ok_or(EmbeddingError::EmptyVocabulary(cfg.min_count))?;
    let sentences: Vec<Vec<usize>> =
        corpus.iter().map(|s| s.tokens.iter().filter_map(|t| vocab.id(t)).collect()).collect();

    let d = cfg.dim;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = Array2::from_shape_fn((v, d), |_| (rng.random::<f64>() - 0.5) / d as f64);
    let mut output = Array2::<f64>::zeros((v, d));

    let total_words = vocab.total() as f64;
    let keep_prob: Vec<f64> = (0..v)
        .map(|i| {
            if cfg.subsample_t == 0.0 {
                return 1.0;
            }
            let f = vocab.count(i) as f64;
            let threshold = cfg.subsample_t * total_words;
            ((f / threshold).sqrt() + 1.0) * threshold / f
        })
        .collect();

    let budget = total_words * cfg.epochs as f64;
    let min_lr = cfg.initial_lr * 1e-4;
    let mut processed = 0.0;
    let mut grad = Array1::<f64>::zeros(d);
    let mut kept = Vec::new();

    for _ in 0..cfg.epochs {
        for sent in &sentences {
            let lr = (cfg.initial_lr * (1.0 - processed / budget)).max(min_lr);
            processed += sent.len() as f64;

            kept.clear();
            for &w in sent {
                if keep_prob[w] >= 1.0 || rng.random::<f64>() < keep_prob[w] {
                    kept.push(w);
                }
            }
            for (pos, &center) in kept.iter().enumerate() {
                let radius = rng.random_range(1..=cfg.window);
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(kept.len() - 1);
                for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    // The context word's input vector predicts the center word.
                    grad.fill(0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (center, 1.0)
                        } else {
                            let t = vocab.noise().sample(&mut rng);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let score = input.row(context).dot(&output.row(target));
                        let g = (label - sigmoid(score)) * lr;
                        grad.scaled_add(g, &output.row(target));
                        let ctx = input.row(context).to_owned();
                        output.row_mut(target).scaled_add(g, &ctx);
                    }
                    input.row_mut(context).scaled_add(1.0, &grad);
                }
            }
        }
    }

    Ok(EmbeddingTable::new(vocab.tokens().to_vec(), input))
}
