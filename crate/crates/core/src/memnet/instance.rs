use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::MemNetError;
use crate::corpus::{CharacterId, NormalizedText};
use crate::embeddings::EmbeddingTable;

/// One question, encoded: query, key/value memories, and candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct MemNetInstance {
    pub query: Array1<f64>,
    /// One row per memory slot.
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
    /// One row per candidate character.
    pub candidates: Array2<f64>,
    pub labels: Vec<CharacterId>,
    pub gold: Vec<usize>,
}

impl MemNetInstance {
    pub fn dim(&self) -> usize {
        self.query.len()
    }

    pub fn slots(&self) -> usize {
        self.keys.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.nrows()
    }
}

/// An instance as embedding-table row ids, so it can be re-encoded after the
/// table changes and gradients can be routed back to table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTokens {
    pub question_id: String,
    /// In-vocabulary question tokens, repeats kept.
    pub question: Vec<usize>,
    /// In-vocabulary tokens of each context sentence.
    pub keys: Vec<Vec<usize>>,
    /// Distinct in-vocabulary character ids of each context sentence.
    pub values: Vec<Vec<usize>>,
    /// Table row of each roster character; `None` encodes as zero.
    pub candidates: Vec<Option<usize>>,
    pub labels: Vec<CharacterId>,
    pub gold: Vec<usize>,
}

impl InstanceTokens {
    /// Maps normalized text onto table rows. Out-of-vocabulary tokens are
    /// dropped, which matches averaging semantics.
    pub fn new(
        question_id: &str,
        question: &NormalizedText,
        context: &[&NormalizedText],
        roster: &[CharacterId],
        gold: &[CharacterId],
        table: &EmbeddingTable,
    ) -> Result<Self, MemNetError> {
        if roster.len() < 2 {
            return Err(MemNetError::Instance(format!("{question_id}: roster has {} characters, need 2", roster.len())));
        }
        if context.is_empty() {
            return Err(MemNetError::Instance(format!("{question_id}: empty context")));
        }
        if gold.is_empty() {
            return Err(MemNetError::Instance(format!("{question_id}: empty gold set")));
        }
        let ids = |toks: &[String]| toks.iter().filter_map(|t| table.id(t)).collect::<Vec<_>>();
        let values = context
            .iter()
            .map(|s| {
                let mut chars: Vec<usize> = Vec::new();
                for c in s.character_ids() {
                    if let Some(id) = table.id(c.as_str()) {
                        if !chars.contains(&id) {
                            chars.push(id);
                        }
                    }
                }
                chars
            })
            .collect();
        let mut gold_idx = Vec::new();
        for g in gold {
            let pos = roster
                .iter()
                .position(|c| c == g)
                .ok_or_else(|| MemNetError::Instance(format!("{question_id}: gold {g} not in roster")))?;
            if !gold_idx.contains(&pos) {
                gold_idx.push(pos);
            }
        }
        Ok(InstanceTokens {
            question_id: question_id.to_string(),
            question: ids(&question.tokens),
            keys: context.iter().map(|s| ids(&s.tokens)).collect(),
            values,
            candidates: roster.iter().map(|c| table.id(c.as_str())).collect(),
            labels: roster.to_vec(),
            gold: gold_idx,
        })
    }

    pub fn encode(&self, table: &EmbeddingTable) -> MemNetInstance {
        let d = table.dim();
        let mean_rows = |rows: &[usize]| {
            let mut v = Array1::zeros(d);
            for &r in rows {
                v += &table.row(r);
            }
            if !rows.is_empty() {
                v /= rows.len() as f64;
            }
            v
        };
        let stack = |sets: &[Vec<usize>]| {
            let mut m = Array2::zeros((sets.len(), d));
            for (i, s) in sets.iter().enumerate() {
                m.row_mut(i).assign(&mean_rows(s));
            }
            m
        };
        let mut candidates = Array2::zeros((self.candidates.len(), d));
        for (j, c) in self.candidates.iter().enumerate() {
            if let Some(r) = c {
                candidates.row_mut(j).assign(&table.row(*r));
            }
        }
        MemNetInstance {
            query: mean_rows(&self.question),
            keys: stack(&self.keys),
            values: stack(&self.values),
            candidates,
            labels: self.labels.clone(),
            gold: self.gold.clone(),
        }
    }

    /// Adds the table-row gradient implied by gradients on the encoded
    /// vectors: each averaged row receives its share of the mean's gradient.
    pub fn accumulate_table_grad(
        &self,
        d_query: &Array1<f64>,
        d_keys: &Array2<f64>,
        d_values: &Array2<f64>,
        d_candidates: &Array2<f64>,
        out: &mut Array2<f64>,
    ) {
        let spread = |rows: &[usize], g: ndarray::ArrayView1<'_, f64>, out: &mut Array2<f64>| {
            if rows.is_empty() {
                return;
            }
            let share = 1.0 / rows.len() as f64;
            for &r in rows {
                out.row_mut(r).scaled_add(share, &g);
            }
        };
        spread(&self.question, d_query.view(), out);
        for (i, rows) in self.keys.iter().enumerate() {
            spread(rows, d_keys.row(i), out);
        }
        for (i, rows) in self.values.iter().enumerate() {
            spread(rows, d_values.row(i), out);
        }
        for (j, c) in self.candidates.iter().enumerate() {
            if let Some(r) = c {
                out.row_mut(*r).scaled_add(1.0, &d_candidates.row(j));
            }
        }
    }
}

/// Encodes one question against its context and the book's characters.
pub fn build_instance(
    question: &NormalizedText,
    context: &[NormalizedText],
    roster: &[CharacterId],
    gold: &[CharacterId],
    table: &EmbeddingTable,
) -> Result<MemNetInstance, MemNetError> {
    let ctx: Vec<&NormalizedText> = context.iter().collect();
    Ok(InstanceTokens::new("", question, &ctx, roster, gold, table)?.encode(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn nt(s: &str) -> NormalizedText {
        NormalizedText::new(s.split_whitespace().map(String::from).collect())
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::new(
            ["who", "ran", "@char1", "@char2", "@char3", "rain"].iter().map(|s| s.to_string()).collect(),
            array![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [2.0, 0.0, 1.0],
                [0.0, 4.0, 1.0],
                [1.0, 1.0, 1.0],
                [0.0, 0.0, 3.0]
            ],
        )
    }

    fn roster() -> Vec<CharacterId> {
        (1..=3).map(CharacterId::new).collect()
    }

    #[test]
    fn value_slots() {
        let t = table();
        let ctx = [nt("@char1 ran"), nt("rain fell"), nt("@char1 met @char2 and @char1")];
        let inst = build_instance(&nt("who ran ?"), &ctx, &roster(), &[CharacterId::new(1)], &t).unwrap();
        assert_eq!(inst.values.row(0), t.get("@char1").unwrap());
        assert_eq!(inst.values.row(1), array![0.0, 0.0, 0.0]);
        // recount: distinct characters of sentence 2 are @char1 and @char2
        let expect = (&t.get("@char1").unwrap() + &t.get("@char2").unwrap()) / 2.0;
        assert_eq!(inst.values.row(2), expect);
        assert_eq!(inst.query, array![0.5, 0.5, 0.0]);
        assert_eq!(inst.keys.row(1), array![0.0, 0.0, 3.0]);
        assert_eq!(inst.candidates.row(1), t.get("@char2").unwrap());
        assert_eq!(inst.gold, vec![0]);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let t = table();
        let ctx = [nt("@char1 ran")];
        let one = vec![CharacterId::new(1)];
        assert!(build_instance(&nt("who"), &ctx, &one, &one, &t).is_err());
        assert!(build_instance(&nt("who"), &[], &roster(), &one, &t).is_err());
        assert!(build_instance(&nt("who"), &ctx, &roster(), &[CharacterId::new(9)], &t).is_err());
    }

    #[test]
    fn table_gradient_spreads_by_average() {
        let t = table();
        let ctx = [nt("@char1 ran ran")];
        let toks = InstanceTokens::new("q", &nt("who ran"), &[&ctx[0]], &roster(), &[CharacterId::new(2)], &t).unwrap();
        let mut out = Array2::zeros((t.len(), 3));
        toks.accumulate_table_grad(
            &array![1.0, 1.0, 1.0],
            &array![[3.0, 0.0, 0.0]],
            &array![[0.0, 2.0, 0.0]],
            &Array2::zeros((3, 3)),
            &mut out,
        );
        // "ran": once in the question (share 1/2), twice in the key (2 * 1/3 of 3.0)
        assert_eq!(out.row(1), array![2.5, 0.5, 0.5]);
        assert_eq!(out.row(2), array![1.0, 2.0, 0.0]);
    }
}
