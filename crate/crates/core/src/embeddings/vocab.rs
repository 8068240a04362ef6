use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;

use crate::corpus::NormalizedText;

/// Training vocabulary with the unigram^0.75 noise distribution.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    noise: WeightedIndex<f64>,
}

impl Vocab {
    /// Counts tokens and keeps those seen at least `min_count` times, most
    /// frequent first (ties alphabetical). `None` when nothing survives.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a NormalizedText>, min_count: u64) -> Option<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in corpus {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        if kept.is_empty() {
            return None;
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
        let counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
        let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75))).ok()?;
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Some(Vocab { tokens, index, counts, noise })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn noise(&self) -> &WeightedIndex<f64> {
        &self.noise
    }
}
