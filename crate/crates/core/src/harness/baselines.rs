use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::corpus::{CharacterId, NormalizedBook, NormalizedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    BookFreq,
    ContextFreq,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Random, BaselineKind::BookFreq, BaselineKind::ContextFreq];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::BookFreq => "book_freq",
            BaselineKind::ContextFreq => "context_freq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Roster ranked by descending count, ties in roster order.
fn rank_by_counts(roster: &[CharacterId], counts: &HashMap<&str, u64>) -> Vec<(CharacterId, f64)> {
    let mut ranked: Vec<(usize, u64)> = roster.iter().enumerate().map(|(i, c)| (i, counts.get(c.as_str()).copied().unwrap_or(0))).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(i, n)| (roster[i].clone(), n as f64)).collect()
}

/// Ranks `book`'s roster without a model.
///
/// Frequency baselines count `@charN` tokens of the normalized text, over the
/// whole book or over `context`. Random is a seeded shuffle scored by
/// reciprocal rank.
pub fn baseline_rank(
    kind: BaselineKind,
    question_id: &str,
    gold: &[CharacterId],
    book: &NormalizedBook,
    context: &[NormalizedText],
    seed: u64,
) -> Prediction {
    let count = |sents: &[NormalizedText]| {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in sents.iter().flat_map(|s| &s.tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        rank_by_counts(&book.roster, &counts)
    };
    let ranked = match kind {
        BaselineKind::BookFreq => count(&book.sentences),
        BaselineKind::ContextFreq => count(context),
        BaselineKind::Random => {
            let mut order = book.roster.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order.into_iter().enumerate().map(|(i, c)| (c, 1.0 / (i + 1) as f64)).collect()
        }
    };
    Prediction { question_id: question_id.to_string(), ranked, gold: gold.to_vec(), probabilistic: false }
}
