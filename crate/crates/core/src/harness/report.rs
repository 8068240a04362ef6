use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentConfig, ARM_BOOK_FREQ, ARM_CONTEXT_FREQ, ARM_PLAIN, ARM_PRETRAINED, ARM_RANDOM};
use super::Metrics;

/// One (fold, trial) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub trial: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub init_seed: u64,
    pub finetune_seed: u64,
    pub metrics: BTreeMap<String, Metrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub p_at_1: MeanStd,
    pub p_at_5: MeanStd,
    pub mrr: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Hash of the configuration together with the data.
    pub config_hash: String,
    pub data_hash: String,
    pub config: ExperimentConfig,
    /// Fold-split seed of each trial.
    pub seeds: Vec<u64>,
    pub n_books: usize,
    pub n_questions: usize,
    /// Share of questions whose selected context mentions a gold character.
    pub context_coverage: f64,
    pub summary: Vec<ArmSummary>,
    pub runs: Vec<RunRecord>,
}

const ARM_ORDER: [&str; 5] = [ARM_RANDOM, ARM_BOOK_FREQ, ARM_CONTEXT_FREQ, ARM_PLAIN, ARM_PRETRAINED];

/// Per-arm mean and deviation over runs, in table order.
pub fn summarize(runs: &[RunRecord]) -> Vec<ArmSummary> {
    ARM_ORDER
        .iter()
        .filter_map(|&arm| {
            let ms: Vec<&Metrics> = runs.iter().filter_map(|r| r.metrics.get(arm)).collect();
            if ms.is_empty() {
                return None;
            }
            let col = |f: fn(&Metrics) -> f64| MeanStd::of(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
            Some(ArmSummary { arm: arm.to_string(), runs: ms.len(), p_at_1: col(|m| m.p_at_1), p_at_5: col(|m| m.p_at_5), mrr: col(|m| m.mrr) })
        })
        .collect()
}

fn label(arm: &str) -> &str {
    match arm {
        ARM_RANDOM => "Random",
        ARM_BOOK_FREQ => "Book frequency",
        ARM_CONTEXT_FREQ => "Context frequency",
        ARM_PLAIN => "No pretraining",
        ARM_PRETRAINED => "Pretrain w/ Artif. Qs",
        other => other,
    }
}

impl EvalReport {
    pub fn arm(&self, arm: &str) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm)
    }

    /// Pretrained minus plain mean P@1, when both arms ran.
    pub fn pretraining_gain(&self) -> Option<f64> {
        Some(self.arm(ARM_PRETRAINED)?.p_at_1.mean - self.arm(ARM_PLAIN)?.p_at_1.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Text table laid out like the paper's results table: baselines, then
    /// the memory network with and without pretraining; P@1 and P@5 in
    /// percent, MRR as a fraction.
    pub fn render_table(&self) -> String {
        let method = match self.config.retrieval {
            super::RetrievalMethod::Bm25f => "BM25F",
            super::RetrievalMethod::External => "External",
        };
        let mut out = String::new();
        let row = |out: &mut String, name: &str, a: &str, b: &str, c: &str| {
            let _ = writeln!(out, "{name:<26} | {a:>15} | {b:>15} | {c:>15}");
        };
        row(&mut out, "Metric", "P@1", "P@5", "MRR");
        row(&mut out, "Context selection", method, method, method);
        let rule = format!("{}\n", "-".repeat(26 + 3 * 18));
        out.push_str(&rule);
        let fmt_pct = |m: MeanStd| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std);
        let fmt_mrr = |m: MeanStd| format!("{:.3}±{:.3}", m.mean, m.std);
        for (header, arms) in [("Baselines:", &ARM_ORDER[..3]), ("KV-MemNet:", &ARM_ORDER[3..])] {
            let _ = writeln!(out, "{header}");
            for arm in arms {
                if let Some(s) = self.arm(arm) {
                    row(&mut out, &format!("  {}", label(arm)), &fmt_pct(s.p_at_1), &fmt_pct(s.p_at_5), &fmt_mrr(s.mrr));
                }
            }
            out.push_str(&rule);
        }
        if let Some(g) = self.pretraining_gain() {
            let _ = writeln!(out, "Pretraining effect on P@1: {:+.2} points", 100.0 * g);
        }
        let _ = writeln!(
            out,
            "{} runs ({} folds x {} trials), {} questions over {} books; context coverage {:.1}%",
            self.runs.len(),
            self.config.folds,
            self.config.trials,
            self.n_questions,
            self.n_books,
            100.0 * self.context_coverage
        );
        let _ = writeln!(out, "config {}", self.config_hash);
        out
    }
}
