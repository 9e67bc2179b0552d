use std::fmt;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{all_probabilities, gold_labels, tune_threshold, EvalReport};
use crate::corpus::{InstanceChain, RelationVocab};
use crate::encoder::WordVocab;
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ModelConfig};
use crate::numerics::ParamGrads;

const SHUFFLE_SALT: u64 = 0x5eed_5f1e;

/// Model sized for `train`, initialized from `config.seed`.
pub fn fresh_model(
    config: &TrainConfig,
    train: &[InstanceChain],
    relations: &RelationVocab,
) -> Result<Model<f64>> {
    let model_config = ModelConfig {
        n_relations: relations.len(),
        seed: config.seed,
        ..config.model.clone()
    };
    Model::new(
        model_config,
        WordVocab::from_chains_min(train, config.min_count),
        relations.clone(),
        config.lr,
    )
}

/// Dropout stream of one instance in one batch of one epoch.
fn instance_rng(seed: u64, epoch: usize, batch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 40) ^ ((batch as u64) << 20) ^ index as u64);
    rng
}

/// One Adagrad update on the mean NLL of `batch`. Returns that mean.
pub fn train_step(
    model: &mut Model<f64>,
    batch: &[&InstanceChain],
    seed: u64,
    epoch: usize,
    batch_idx: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut grads = ParamGrads::new(model.store.len());
    let mut total = 0.0;
    for (i, chain) in batch.iter().enumerate() {
        let mut rng = instance_rng(seed, epoch, batch_idx, i);
        let (loss, g) = model.loss_and_grads(chain, &mut Mode::Train(&mut rng))?;
        if !loss.is_finite() {
            return Err(Error::Contract(format!(
                "non-finite loss {loss} at epoch {epoch}, batch {batch_idx}, instance {i}"
            )));
        }
        total += loss;
        grads.merge(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    model.store.adagrad_step(&grads)?;
    if !model.store.all_finite() {
        return Err(Error::Contract(format!(
            "non-finite parameter after epoch {epoch}, batch {batch_idx}"
        )));
    }
    Ok(total / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub val: EvalReport,
    pub improved: bool,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={:.6} lr={:.6} val_p={:.4} val_r={:.4} val_f1={:.4} tau={:.2}{}",
            self.epoch,
            self.mean_loss,
            self.lr,
            self.val.precision,
            self.val.recall,
            self.val.f1,
            self.val.threshold.unwrap_or(0.0),
            if self.improved { " *" } else { "" }
        )
    }
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation F1.
    pub model: Model<f64>,
    pub threshold: f64,
    pub best_epoch: usize,
    pub best_val: EvalReport,
    pub logs: Vec<EpochLog>,
}

/// Shuffled mini-batch epochs with validation after each; keeps the best
/// validation F1 and its tuned threshold.
pub fn train(
    mut model: Model<f64>,
    train: &[InstanceChain],
    val: &[InstanceChain],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    model.store.set_lr(config.lr);
    let val_gold = gold_labels(val);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut best: Option<(Model<f64>, f64, usize, EvalReport)> = None;
    let mut logs = Vec::new();
    let mut stagnant = 0;
    let mut lr = config.lr;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&InstanceChain> = idx.iter().map(|&i| &train[i]).collect();
            loss_sum += train_step(&mut model, &batch, config.seed, epoch, b)?;
            n_batches += 1;
        }
        let probs = all_probabilities(&model, val)?;
        let (tau, report) = tune_threshold(&probs, &val_gold, config.decision)?;
        let improved = best.as_ref().map_or(true, |(.., r)| report.f1 > r.f1);
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / n_batches as f64,
            lr,
            val: report.clone(),
            improved,
        };
        info!("{log}");
        logs.push(log);
        if improved {
            best = Some((model.clone(), tau, epoch, report));
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.patience {
                break;
            }
            if config.halve_after > 0 && stagnant % config.halve_after == 0 {
                lr /= 2.0;
                model.store.set_lr(lr);
            }
        }
    }
    let (model, threshold, best_epoch, best_val) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        threshold,
        best_epoch,
        best_val,
        logs,
    })
}
