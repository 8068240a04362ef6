use serde::{Deserialize, Serialize};

use crate::corpus::{CharacterId, NormalizedText};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub fraction: f64,
    pub per_question: Vec<(String, bool)>,
}

/// Share of questions whose context mentions at least one gold character.
pub fn coverage_diagnostic<'a>(items: impl IntoIterator<Item = (&'a str, &'a [NormalizedText], &'a [CharacterId])>) -> CoverageReport {
    let per_question: Vec<(String, bool)> = items
        .into_iter()
        .map(|(qid, context, gold)| (qid.to_string(), gold.iter().any(|g| context.iter().any(|s| s.mentions(g)))))
        .collect();
    let hits = per_question.iter().filter(|(_, hit)| *hit).count();
    let fraction = if per_question.is_empty() { 0.0 } else { hits as f64 / per_question.len() as f64 };
    CoverageReport { fraction, per_question }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nt(s: &str) -> NormalizedText {
        NormalizedText::new(s.split_whitespace().map(String::from).collect())
    }

    #[test]
    fn counts_mentions() {
        let ctx = vec![nt("@char2 ran"), nt("rain fell")];
        let g1 = vec![CharacterId::new(2)];
        let g2 = vec![CharacterId::new(1)];
        let r = coverage_diagnostic([("a", &ctx[..], &g1[..]), ("b", &ctx[..], &g2[..]), ("c", &[][..], &g1[..])]);
        assert_eq!(r.per_question, [("a".into(), true), ("b".into(), false), ("c".into(), false)]);
        assert!((r.fraction - 1.0 / 3.0).abs() < 1e-15);
    }
}
