use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::model::{gradients, MemNetGrads, MemNetParams};
use super::{InstanceTokens, MemNetError, MemNetInstance};
use crate::embeddings::EmbeddingTable;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    /// Epochs between decays.
    pub lr_decay_period: usize,
    pub embeddings_trainable: bool,
    pub hops: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// 60 epochs at 1e-3, frozen embeddings.
    pub fn finetune() -> Self {
        TrainConfig {
            mode: TrainMode::Finetune,
            epochs: 60,
            batch_size: 32,
            initial_lr: 1e-3,
            lr_decay: 0.9,
            lr_decay_period: 2,
            embeddings_trainable: false,
            hops: 3,
            seed: 1,
        }
    }

    /// One epoch with trainable embeddings.
    pub fn pretrain() -> Self {
        TrainConfig { mode: TrainMode::Pretrain, epochs: 1, embeddings_trainable: true, ..Self::finetune() }
    }

    pub fn validate(&self) -> Result<(), MemNetError> {
        let bad = |m: &str| Err(MemNetError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return bad("initial learning rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning-rate decay must lie in (0, 1]");
        }
        if self.lr_decay_period == 0 {
            return bad("decay period must be at least 1");
        }
        if self.hops == 0 {
            return bad("hops must be at least 1");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::finetune()
    }
}

/// Learning rate used throughout 1-indexed `epoch`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    let decays = epoch.saturating_sub(1) / cfg.lr_decay_period.max(1);
    cfg.initial_lr * cfg.lr_decay.powi(decays as i32)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean loss over each epoch's accepted batches.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
    /// (epoch, batch) of every batch dropped for a non-finite gradient.
    pub rejected: Vec<(usize, usize)>,
}

/// Trains `params` on `dataset`. With trainable embeddings every instance is
/// re-encoded from the current table and `table` is updated in place;
/// otherwise instances are encoded once and the table is left alone.
pub fn train(
    params: &mut MemNetParams,
    dataset: &[InstanceTokens],
    table: &mut EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<TrainLog, MemNetError> {
    if !cfg.embeddings_trainable {
        let encoded: Vec<MemNetInstance> = par::map(dataset, |t| t.encode(table));
        return train_instances(params, &encoded, cfg);
    }
    let dim = table.dim();
    let run = |params: &MemNetParams, table: &EmbeddingTable, batch: &[usize]| {
        par::try_map(batch, |&i| {
            let toks = &dataset[i];
            gradients(params, &toks.encode(table), &toks.gold)
        })
    };
    let accumulate = |batch: &[usize], grads: &[MemNetGrads], out: &mut Array2<f64>| {
        for (&i, g) in batch.iter().zip(grads) {
            dataset[i].accumulate_table_grad(&g.query, &g.keys, &g.values, &g.candidates, out);
        }
    };
    let mut table_grad = Array2::zeros((table.len(), dim));
    let mut state = AdamState::new(params.hops.iter().chain([&params.output, table.vectors()]));
    run_epochs(dataset.len(), cfg, params, |params, batch, lr| {
        let grads = run(params, table, batch)?;
        table_grad.fill(0.0);
        accumulate(batch, &grads, &mut table_grad);
        table_grad /= batch.len() as f64;
        let (loss, mut hop_g, mut out_g) = mean_param_grads(&grads);
        if !loss.is_finite() {
            return Ok(StepOutcome::NonFiniteLoss);
        }
        let mut ps: Vec<&mut Array2<f64>> = params.hops.iter_mut().collect();
        ps.push(&mut params.output);
        ps.push(table.vectors_mut());
        hop_g.push(std::mem::take(&mut out_g));
        let mut gs: Vec<&Array2<f64>> = hop_g.iter().collect();
        gs.push(&table_grad);
        step(&mut state, &mut ps, &gs, lr, loss)
    })
}

/// Trains on instances whose encodings never change.
pub fn train_instances(params: &mut MemNetParams, dataset: &[MemNetInstance], cfg: &TrainConfig) -> Result<TrainLog, MemNetError> {
    let mut state = AdamState::new(params.hops.iter().chain([&params.output]));
    run_epochs(dataset.len(), cfg, params, |params, batch, lr| {
        let grads = par::try_map(batch, |&i| gradients(params, &dataset[i], &dataset[i].gold))?;
        let (loss, mut hop_g, out_g) = mean_param_grads(&grads);
        if !loss.is_finite() {
            return Ok(StepOutcome::NonFiniteLoss);
        }
        hop_g.push(out_g);
        let mut ps: Vec<&mut Array2<f64>> = params.hops.iter_mut().collect();
        ps.push(&mut params.output);
        let gs: Vec<&Array2<f64>> = hop_g.iter().collect();
        step(&mut state, &mut ps, &gs, lr, loss)
    })
}

enum StepOutcome {
    Applied(f64),
    Rejected,
    NonFiniteLoss,
}

fn step(state: &mut AdamState, ps: &mut [&mut Array2<f64>], gs: &[&Array2<f64>], lr: f64, loss: f64) -> Result<StepOutcome, MemNetError> {
    match adam_step(state, ps, gs, lr) {
        Ok(()) => Ok(StepOutcome::Applied(loss)),
        Err(MemNetError::NonFiniteGradient) => Ok(StepOutcome::Rejected),
        Err(e) => Err(e),
    }
}

/// Batch-mean loss and parameter gradients, summed in batch order.
fn mean_param_grads(grads: &[MemNetGrads]) -> (f64, Vec<Array2<f64>>, Array2<f64>) {
    let n = grads.len() as f64;
    let mut loss = 0.0;
    let mut hops: Vec<Array2<f64>> = grads[0].hops.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
    let mut output = Array2::zeros(grads[0].output.raw_dim());
    for g in grads {
        loss += g.loss;
        for (acc, h) in hops.iter_mut().zip(&g.hops) {
            *acc += h;
        }
        output += &g.output;
    }
    for h in &mut hops {
        *h /= n;
    }
    output /= n;
    (loss / n, hops, output)
}

fn run_epochs<F>(n: usize, cfg: &TrainConfig, params: &mut MemNetParams, mut batch_step: F) -> Result<TrainLog, MemNetError>
where
    F: FnMut(&mut MemNetParams, &[usize], f64) -> Result<StepOutcome, MemNetError>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(MemNetError::EmptyDataset);
    }
    if params.n_hops() != cfg.hops {
        return Err(MemNetError::Config(format!("model has {} hops, configuration says {}", params.n_hops(), cfg.hops)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch);
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            match batch_step(params, batch, lr)? {
                StepOutcome::Applied(loss) => {
                    total += loss;
                    batches += 1;
                    log.steps += 1;
                }
                StepOutcome::Rejected => {
                    log::warn!("epoch {epoch}, batch {}: non-finite gradient, batch skipped", b + 1);
                    log.rejected.push((epoch, b + 1));
                }
                StepOutcome::NonFiniteLoss => return Err(MemNetError::NonFiniteLoss { epoch, batch: b + 1 }),
            }
        }
        let mean = if batches > 0 { total / batches as f64 } else { f64::NAN };
        log::debug!("epoch {epoch}: lr {lr:.3e}, mean loss {mean:.6}");
        log.epoch_loss.push(mean);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::super::model::tests::{random_instance, random_params};
    use super::super::model::predict;
    use super::*;
    use crate::corpus::{CharacterId, NormalizedText};

    #[test]
    fn schedule() {
        let cfg = TrainConfig::finetune();
        assert_eq!(lr_at_epoch(&cfg, 1), 1e-3);
        assert_eq!(lr_at_epoch(&cfg, 2), 1e-3);
        assert_eq!(lr_at_epoch(&cfg, 3), 1e-3 * 0.9);
        assert!((lr_at_epoch(&cfg, 5) - 1e-3 * 0.81).abs() < 1e-18);
    }

    #[test]
    fn defaults() {
        let f = TrainConfig::finetune();
        assert_eq!((f.epochs, f.initial_lr, f.embeddings_trainable), (60, 1e-3, false));
        let p = TrainConfig::pretrain();
        assert_eq!((p.epochs, p.embeddings_trainable, p.mode), (1, true, TrainMode::Pretrain));
        assert!(TrainConfig { lr_decay: 0.0, ..f.clone() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..f }.validate().is_err());
    }

    fn memorization_set(n: usize, d: usize) -> Vec<MemNetInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..n)
            .map(|i| {
                let mut inst = random_instance(&mut rng, d, 4, 5, 1.0);
                inst.gold = vec![i % 5];
                inst
            })
            .collect()
    }

    #[test]
    fn memorizes_small_set() {
        let data = memorization_set(20, 32);
        let mut params = MemNetParams::init(32, 3, 5);
        let cfg = TrainConfig { epochs: 150, batch_size: 4, initial_lr: 1e-2, ..TrainConfig::finetune() };
        let log = train_instances(&mut params, &data, &cfg).unwrap();
        let hits = data.iter().filter(|x| x.gold.contains(&predict(&params, x).unwrap()[0].0)).count();
        assert_eq!(hits, 20, "final loss {:?}", log.epoch_loss.last());
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = memorization_set(10, 6);
        let cfg = TrainConfig { epochs: 3, batch_size: 3, ..TrainConfig::finetune() };
        let run = || {
            let mut p = MemNetParams::init(6, 3, 2);
            train_instances(&mut p, &data, &cfg).unwrap();
            p
        };
        assert_eq!(run(), run());
        let mut other = MemNetParams::init(6, 3, 2);
        train_instances(&mut other, &data, &TrainConfig { seed: 99, ..cfg.clone() }).unwrap();
        assert_ne!(other, run());
    }

    #[test]
    fn hop_count_must_match() {
        let data = memorization_set(2, 4);
        let mut p = MemNetParams::init(4, 2, 0);
        assert!(matches!(train_instances(&mut p, &data, &TrainConfig::finetune()), Err(MemNetError::Config(_))));
        assert!(matches!(train_instances(&mut p, &[], &TrainConfig { hops: 2, ..TrainConfig::finetune() }), Err(MemNetError::EmptyDataset)));
    }

    #[test]
    fn non_finite_loss_reports_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = vec![random_instance(&mut rng, 4, 2, 3, 1.0)];
        data[0].candidates[[1, 0]] = f64::NAN;
        let mut p = random_params(&mut rng, 4, 3, 0.5);
        let cfg = TrainConfig { hops: 3, ..TrainConfig::finetune() };
        let r = train_instances(&mut p, &data, &cfg);
        assert!(matches!(r, Err(MemNetError::NonFiniteLoss { epoch: 1, batch: 1 })), "{r:?}");
    }

    #[test]
    fn trainable_embeddings_move_and_frozen_stay() {
        let nt = |s: &str| NormalizedText::new(s.split_whitespace().map(String::from).collect());
        let tokens: Vec<String> = ["who", "ran", "sat", "@char1", "@char2"].iter().map(|s| s.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vectors = ndarray::Array2::from_shape_fn((5, 4), |_| rand::Rng::random_range(&mut rng, -0.5..0.5));
        let table = EmbeddingTable::new(tokens, vectors);
        let roster = [CharacterId::new(1), CharacterId::new(2)];
        let (s1, s2) = (nt("@char1 ran"), nt("@char2 sat"));
        let data = vec![
            InstanceTokens::new("a", &nt("who ran"), &[&s1, &s2], &roster, &roster[..1], &table).unwrap(),
            InstanceTokens::new("b", &nt("who sat"), &[&s1, &s2], &roster, &roster[1..], &table).unwrap(),
        ];
        let mut frozen = table.clone();
        let mut p = MemNetParams::init(4, 3, 1);
        train(&mut p, &data, &mut frozen, &TrainConfig { epochs: 2, ..TrainConfig::finetune() }).unwrap();
        assert_eq!(frozen, table);

        let mut live = table.clone();
        let mut p = MemNetParams::init(4, 3, 1);
        let log = train(&mut p, &data, &mut live, &TrainConfig { epochs: 2, ..TrainConfig::pretrain() }).unwrap();
        assert_eq!(log.steps, 2);
        assert_ne!(live, table);
    }
}
