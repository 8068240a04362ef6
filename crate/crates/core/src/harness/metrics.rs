use serde::{Deserialize, Serialize};

use crate::corpus::CharacterId;

/// A full ranking of one book's roster for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    /// Candidates in rank order with a probability or baseline score.
    pub ranked: Vec<(CharacterId, f64)>,
    pub gold: Vec<CharacterId>,
    /// True when the scores are model probabilities.
    pub probabilistic: bool,
}

impl Prediction {
    /// 1-based rank of the best-placed gold character.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|(c, _)| self.gold.contains(c)).map(|r| r + 1)
    }

    pub fn top(&self) -> Option<&CharacterId> {
        self.ranked.first().map(|(c, _)| c)
    }

    /// Probability gap between the first and second candidate.
    pub fn margin(&self) -> f64 {
        match self.ranked.as_slice() {
            [] => 0.0,
            [(_, p)] => *p,
            [(_, a), (_, b), ..] => a - b,
        }
    }
}

/// Fraction of predictions with a gold character in the top `k`.
pub fn precision_at_k(preds: &[Prediction], k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().filter(|p| p.gold_rank().is_some_and(|r| r <= k)).count();
    hits as f64 / preds.len() as f64
}

/// Mean reciprocal rank of the best gold character. Predictions whose
/// ranking misses every gold character contribute 0.
pub fn mrr(preds: &[Prediction]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds.iter().map(|p| p.gold_rank().map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / preds.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub mrr: f64,
}

impl Metrics {
    pub fn of(preds: &[Prediction]) -> Self {
        Metrics { p_at_1: precision_at_k(preds, 1), p_at_5: precision_at_k(preds, 5), mrr: mrr(preds) }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn pred_with_gold_at(rank: usize, n: usize) -> Prediction {
        let ranked: Vec<(CharacterId, f64)> = (1..=n as u64).map(|i| (CharacterId::new(i), 1.0 / i as f64)).collect();
        Prediction { question_id: format!("q{rank}"), gold: vec![ranked[rank - 1].0.clone()], ranked, probabilistic: false }
    }

    #[test]
    fn hand_values() {
        let first: Vec<_> = (0..4).map(|_| pred_with_gold_at(1, 6)).collect();
        assert_eq!(precision_at_k(&first, 1), 1.0);
        assert_eq!(mrr(&first), 1.0);
        let fifth = vec![pred_with_gold_at(5, 6)];
        assert_eq!(precision_at_k(&fifth, 1), 0.0);
        assert_eq!(precision_at_k(&fifth, 5), 1.0);
        let second: Vec<_> = (0..3).map(|_| pred_with_gold_at(2, 6)).collect();
        assert_eq!(mrr(&second), 0.5);
        let mixed = vec![pred_with_gold_at(1, 6), pred_with_gold_at(2, 6), pred_with_gold_at(4, 6)];
        assert!((mrr(&mixed) - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn multi_gold_uses_best_rank() {
        let mut p = pred_with_gold_at(3, 6);
        p.gold.push(CharacterId::new(5));
        assert_eq!(p.gold_rank(), Some(3));
    }

    proptest! {
        #[test]
        fn metric_bounds(ranks in prop::collection::vec(1usize..=8, 1..40)) {
            let preds: Vec<_> = ranks.iter().map(|&r| pred_with_gold_at(r, 8)).collect();
            let m = Metrics::of(&preds);
            prop_assert!(0.0 <= m.p_at_1 && m.p_at_1 <= m.p_at_5 && m.p_at_5 <= 1.0);
            prop_assert!(m.p_at_1 <= m.mrr && m.mrr <= 1.0);
        }
    }
}
