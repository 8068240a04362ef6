use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentConfig, Pipeline, ARM_PLAIN, ARM_PRETRAINED};
use super::{EvalReport, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Hops,
    ContextSentences,
    PretrainFraction,
    PretrainEpochs,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "hops" => SweepParam::Hops,
            "context_sentences" | "context-sentences" => SweepParam::ContextSentences,
            "pretrain_fraction" | "pretrain-fraction" => SweepParam::PretrainFraction,
            "pretrain_epochs" | "pretrain-epochs" => SweepParam::PretrainEpochs,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Hops => "hops",
            SweepParam::ContextSentences => "context_sentences",
            SweepParam::PretrainFraction => "pretrain_fraction",
            SweepParam::PretrainEpochs => "pretrain_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    /// The base config with the swept parameter set to `value`.
    pub fn config_for(&self, value: f64) -> Result<ExperimentConfig, HarnessError> {
        let bad = || HarnessError::Config(format!("{} cannot take the value {value}", self.param.as_str()));
        let count = || if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 { Ok(value as usize) } else { Err(bad()) };
        let mut cfg = self.base.clone();
        match self.param {
            SweepParam::Hops => cfg.hops = count()?,
            SweepParam::ContextSentences => cfg.context_sentences = count()?,
            SweepParam::PretrainEpochs => {
                cfg.pretrain.epochs = count()?;
                cfg.pretrain_enabled = true;
            }
            SweepParam::PretrainFraction => {
                cfg.pretrain_fraction = value;
                cfg.pretrain_enabled = true;
            }
        }
        cfg.validate().map_err(|_| bad())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::Config("sweep grid is empty".into()));
        }
        for &v in &self.values {
            self.config_for(v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub points: Vec<(f64, EvalReport)>,
}

impl SweepResult {
    /// `value,p1_mean,p1_std` rows for the pretrained arm, or the plain arm
    /// when pretraining is off.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["value", "p1_mean", "p1_std"]).expect("in-memory write");
        for (v, r) in &self.points {
            let s = r.arm(ARM_PRETRAINED).or_else(|| r.arm(ARM_PLAIN)).expect("model arm present");
            w.write_record([v.to_string(), s.p_at_1.mean.to_string(), s.p_at_1.std.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Runs one experiment per grid value. Stages that do not depend on the
/// swept parameter come from the pipeline cache.
pub fn run_sweep(pipeline: &Pipeline, spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let cfg = spec.config_for(v)?;
        log::info!("sweep {} = {v}", spec.param.as_str());
        points.push((v, run_experiment(pipeline, &cfg)?.report));
    }
    Ok(SweepResult { param: spec.param, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::SgnsConfig;
    use crate::memnet::TrainConfig;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn grid_validation() {
        let spec = |param, values: Vec<f64>| SweepSpec { param, values, base: ExperimentConfig::default() };
        assert!(spec(SweepParam::Hops, vec![]).validate().is_err());
        assert!(spec(SweepParam::Hops, vec![1.5]).validate().is_err());
        assert!(spec(SweepParam::ContextSentences, vec![3.0]).validate().is_err());
        assert!(spec(SweepParam::PretrainFraction, vec![0.0]).validate().is_err());
        assert!(spec(SweepParam::PretrainFraction, vec![0.25, 1.0]).validate().is_ok());
        assert_eq!(spec(SweepParam::Hops, vec![2.0]).config_for(2.0).unwrap().hops, 2);
    }

    #[test]
    fn context_sweep_reuses_rankings() {
        let c = generate(&SynthConfig { books: 4, sentences_per_book: 40, characters_per_book: 4, questions: 12, facts_per_book: 6, seed: 5 });
        let p = Pipeline::new(c.books, c.questions).unwrap();
        let base = ExperimentConfig {
            folds: 2,
            trials: 1,
            pretrain_enabled: false,
            embeddings: SgnsConfig { dim: 8, epochs: 1, min_count: 1, ..SgnsConfig::default() },
            finetune: TrainConfig { epochs: 1, ..TrainConfig::finetune() },
            ..ExperimentConfig::default()
        };
        let r = run_sweep(&p, &SweepSpec { param: SweepParam::ContextSentences, values: vec![10.0, 20.0], base }).unwrap();
        assert_eq!(p.cache().counts("rankings").misses, 1);
        assert_eq!(p.cache().counts("embeddings").misses, 1);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "value,p1_mean,p1_std");
        assert!(lines[1].starts_with("10,"));
    }
}
