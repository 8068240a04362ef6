use serde::{Deserialize, Serialize};

use super::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub threshold: f64,
    pub answered: usize,
    pub total: usize,
    pub coverage: f64,
    /// P@1 over answered questions; absent when nothing was answered.
    pub selective_p_at_1: Option<f64>,
}

/// Answers only when the top-two probability gap is at least `threshold`.
pub fn confidence_gate(preds: &[Prediction], threshold: f64) -> GateResult {
    let kept: Vec<&Prediction> = preds.iter().filter(|p| p.margin() >= threshold).collect();
    let correct = kept.iter().filter(|p| p.gold_rank() == Some(1)).count();
    GateResult {
        threshold,
        answered: kept.len(),
        total: preds.len(),
        coverage: if preds.is_empty() { 0.0 } else { kept.len() as f64 / preds.len() as f64 },
        selective_p_at_1: (!kept.is_empty()).then(|| correct as f64 / kept.len() as f64),
    }
}

pub fn gate_sweep(preds: &[Prediction], thresholds: &[f64]) -> Vec<GateResult> {
    thresholds.iter().map(|&t| confidence_gate(preds, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CharacterId;
    use crate::harness::precision_at_k;
    use proptest::prelude::*;

    fn pred(probs: &[f64], gold: u64) -> Prediction {
        let mut ranked: Vec<(CharacterId, f64)> = probs.iter().enumerate().map(|(i, &p)| (CharacterId::new(i as u64), p)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Prediction { question_id: "q".into(), ranked, gold: vec![CharacterId::new(gold)], probabilistic: true }
    }

    #[test]
    fn extremes() {
        let preds = vec![pred(&[0.7, 0.2, 0.1], 0), pred(&[0.4, 0.35, 0.25], 1), pred(&[0.5, 0.5, 0.0], 0)];
        let all = confidence_gate(&preds, 0.0);
        assert_eq!(all.coverage, 1.0);
        assert_eq!(all.selective_p_at_1, Some(precision_at_k(&preds, 1)));
        let none = confidence_gate(&preds, 1.5);
        assert_eq!((none.answered, none.coverage, none.selective_p_at_1), (0, 0.0, None));
        let some = confidence_gate(&preds, 0.3);
        assert_eq!((some.answered, some.selective_p_at_1), (1, Some(1.0)));
    }

    proptest! {
        #[test]
        fn coverage_non_increasing(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..30)) {
            let preds: Vec<Prediction> = raw.iter().map(|v| {
                let s: f64 = v.iter().sum();
                pred(&v.iter().map(|x| x / s).collect::<Vec<_>>(), 0)
            }).collect();
            let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
            let res = gate_sweep(&preds, &grid);
            for w in res.windows(2) {
                prop_assert!(w[1].coverage <= w[0].coverage);
            }
        }
    }
}
