//! Multi-seed runs over fixed train/validation/test splits.

use std::sync::Mutex;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::eval::{evaluate_model, EvalReport};
use super::runs::{median_of_runs, RunAggregate, RUNS_PER_CONFIG};
use super::train::{fresh_model, train, EpochLog};
use crate::corpus::{
    balance_none, build_corpus, generate_synthetic, split_train_val, CapitalizationRecognizer,
    InstanceChain, KbStore, RelationVocab, SynthConfig, WikiHopRecord,
};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model};

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<InstanceChain>,
    pub val: Vec<InstanceChain>,
    pub test: Vec<InstanceChain>,
    pub relations: RelationVocab,
}

/// Held-out share of records in [`synthetic_splits`].
pub const SYNTH_TEST_SHARE: f64 = 0.2;

/// Splits records (not instances, so no document chain crosses splits):
/// `test_share` of them for test, the rest cut 90/10 into train and
/// validation. With `balance`, None is first subsampled to the positive
/// count and the cut is made per class, so both splits stay balanced.
pub fn build_splits(
    mut records: Vec<WikiHopRecord>,
    kb: &KbStore,
    test_share: f64,
    balance: bool,
    seed: u64,
) -> Result<Splits> {
    if !(0.0..1.0).contains(&test_share) {
        return Err(Error::Input(format!(
            "test share must be in [0, 1), got {test_share}"
        )));
    }
    let n_records = records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n_test = (n_records as f64 * test_share).round() as usize;
    let (test_records, pool) = records.split_at(n_test);
    let (test, _) = build_corpus(test_records, kb, &CapitalizationRecognizer);
    let (pool, _) = build_corpus(pool, kb, &CapitalizationRecognizer);
    let (train, val) = if balance {
        let (pos, none): (Vec<_>, Vec<_>) = balance_none(pool, &mut rng)
            .into_iter()
            .partition(|c| c.is_positive());
        let (mut train, mut val) = split_train_val(pos, &mut rng);
        let (none_train, none_val) = split_train_val(none, &mut rng);
        train.extend(none_train);
        val.extend(none_val);
        (train, val)
    } else {
        split_train_val(pool, &mut rng)
    };
    Ok(Splits {
        train,
        val,
        test,
        relations: kb.relations.clone(),
    })
}

/// Generates a synthetic corpus and splits it with [`build_splits`],
/// balanced, a fifth of the records held out for test.
pub fn synthetic_splits(config: &SynthConfig) -> Result<Splits> {
    let (records, kb) = generate_synthetic(config)?;
    let splits = build_splits(records, &kb, SYNTH_TEST_SHARE, true, config.seed)?;
    if splits.train.is_empty() || splits.val.is_empty() || splits.test.is_empty() {
        return Err(Error::Input(format!(
            "{} records are too few for train/validation/test splits",
            config.n_records
        )));
    }
    Ok(splits)
}

pub struct RunResult {
    pub seed: u64,
    pub model: Model<f64>,
    pub threshold: f64,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    pub train_report: EvalReport,
    pub val_report: EvalReport,
    /// None when the splits have no test set.
    pub test_report: Option<EvalReport>,
}

impl RunResult {
    /// Test report, or the validation report without a test set.
    pub fn held_out(&self) -> &EvalReport {
        self.test_report.as_ref().unwrap_or(&self.val_report)
    }

    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        self.model.to_checkpoint(self.threshold, config.decision)
    }
}

/// Trains from scratch with `config.seed` and scores every split at the
/// tuned threshold.
pub fn run_once(splits: &Splits, config: &TrainConfig) -> Result<RunResult> {
    let model = fresh_model(config, &splits.train, &splits.relations)?;
    run_from(model, splits, config)
}

/// As [`run_once`] from given initial parameters.
pub fn run_from(model: Model<f64>, splits: &Splits, config: &TrainConfig) -> Result<RunResult> {
    let out = train(model, &splits.train, &splits.val, config)?;
    let rule = config.decision;
    let score = |set: &[InstanceChain]| evaluate_model(&out.model, set, out.threshold, rule);
    Ok(RunResult {
        seed: config.seed,
        train_report: score(&splits.train)?,
        val_report: out.best_val.clone(),
        test_report: if splits.test.is_empty() {
            None
        } else {
            Some(score(&splits.test)?)
        },
        model: out.model,
        threshold: out.threshold,
        best_epoch: out.best_epoch,
        logs: out.logs,
    })
}

/// One run per seed, at most `jobs` at a time; results come back in seed order.
pub fn run_seeds<F>(seeds: &[u64], jobs: usize, run: F) -> Result<Vec<RunResult>>
where
    F: Fn(u64) -> Result<RunResult> + Sync,
{
    let jobs = jobs.clamp(1, seeds.len().max(1));
    let slots: Vec<Mutex<Option<Result<RunResult>>>> =
        seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&seed) = seeds.get(i) else { break };
                *slots[i].lock().expect("result slot") = Some(run(seed));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot")
                .expect("every seed ran")
        })
        .collect()
}

/// Five runs with seeds `first_seed..first_seed + 5` and their median
/// report: on test, or on validation when there is no test set.
pub fn median_of_five(
    splits: &Splits,
    config: &TrainConfig,
    first_seed: u64,
    jobs: usize,
) -> Result<(Vec<RunResult>, RunAggregate)> {
    let seeds: Vec<u64> = (first_seed..first_seed + RUNS_PER_CONFIG as u64).collect();
    let runs = run_seeds(&seeds, jobs, |seed| {
        run_once(
            splits,
            &TrainConfig {
                seed,
                ..config.clone()
            },
        )
    })?;
    let agg = median_of_runs(runs.iter().map(|r| r.held_out().clone()).collect())?;
    Ok((runs, agg))
}
