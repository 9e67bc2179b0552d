use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twohop::corpus::io::{read_instances, read_relations};
use twohop::corpus::{InstanceChain, RelationVocab};
use twohop::encoder::{load_pretrained_embeddings, PretrainedStats};
use twohop::model::{Checkpoint, Model};
use twohop::training::experiment::{run_from, run_seeds, RunResult, Splits};
use twohop::training::{
    bootstrap_significance, evaluate, fresh_model, gold_labels, median_of_runs, predict_set,
    BootstrapResult, EvalReport, RunAggregate, TrainConfig, BOOTSTRAP_SAMPLES, RUNS_PER_CONFIG,
};

use crate::manifest::{digest_inputs, write_json, ManifestBuilder};
use crate::ConfigArgs;

/// Salt for the unknown-word init of a pretrained table, so it does not
/// replay the parameter init stream.
const PRETRAINED_SALT: u64 = 0x0e3b_ed00;

/// Reads `train.jsonl`, `val.jsonl`, `test.jsonl` and `relations.txt` as
/// written by `build-dataset`. A missing test file reads as empty.
pub fn load_splits(dir: &Path) -> Result<Splits> {
    let mut relations = read_relations(&dir.join("relations.txt"))?;
    let mut read = |name: &str, required: bool| -> Result<Vec<InstanceChain>> {
        let path = dir.join(name);
        if !required && !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_instances(&path, &mut relations)?)
    };
    let train = read("train.jsonl", true)?;
    let val = read("val.jsonl", true)?;
    let test = read("test.jsonl", false)?;
    Ok(Splits {
        train,
        val,
        test,
        relations,
    })
}

/// Parses `1..5` (inclusive) or `1,2,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            bail!("empty seed range {s:?}");
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse())
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        bail!("no seeds in {s:?}");
    }
    Ok(seeds)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by `build-dataset`.
    #[arg(long = "in")]
    pub data: PathBuf,
    /// hegcn, cnn, bilstm, bilstm_cnn or linkpath; overrides the config.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed range `a..b` (inclusive) or list `a,b,c`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Word vectors, `token v1 .. v_dw` per line.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub threshold: f64,
    pub best_epoch: usize,
    pub train: EvalReport,
    pub val: EvalReport,
    pub test: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PretrainedStats>,
}

fn initial_model(
    cfg: &TrainConfig,
    splits: &Splits,
    pretrained: Option<&Path>,
) -> twohop::Result<(Model<f64>, Option<PretrainedStats>)> {
    let mut model = fresh_model(cfg, &splits.train, &splits.relations)?;
    let Some(path) = pretrained else {
        return Ok((model, None));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PRETRAINED_SALT);
    let (table, stats) = load_pretrained_embeddings(path, &model.vocab, cfg.model.d_w, &mut rng)?;
    let id = model.word_table();
    model.store.set(id, table)?;
    Ok((model, Some(stats)))
}

pub fn train(a: TrainArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("train");
    let mut cfg = a.config.load()?;
    if let Some(m) = &a.model {
        cfg.set("model", m)?;
    }
    if let Some(p) = &a.pretrained {
        if !p.is_file() {
            bail!("pretrained embedding file {} not found", p.display());
        }
    }
    let seeds = match (&a.seeds, a.seed) {
        (Some(s), _) => parse_seeds(s)?,
        (None, Some(s)) => vec![s],
        (None, None) => vec![cfg.seed],
    };
    let splits = load_splits(&a.data)?;
    let pretrained = a.pretrained.as_deref();
    let coverage = std::sync::Mutex::new(Vec::new());
    let runs: Vec<RunResult> = run_seeds(&seeds, a.jobs, |seed| {
        let cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let (model, stats) = initial_model(&cfg, &splits, pretrained)?;
        if let Some(s) = stats {
            coverage.lock().expect("coverage").push((seed, s));
        }
        run_from(model, &splits, &cfg)
    })?;
    let coverage = coverage.into_inner().expect("coverage");

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut outputs = Vec::new();
    for r in &runs {
        let dir = a.out.join(format!("seed-{}", r.seed));
        fs::create_dir_all(&dir)?;
        let cfg = TrainConfig {
            seed: r.seed,
            ..cfg.clone()
        };
        r.checkpoint(&cfg).save(&dir.join("checkpoint.json"))?;
        let log: String = r.logs.iter().map(|l| format!("{l}\n")).collect();
        fs::write(dir.join("train.log"), log)?;
        let report = SeedReport {
            seed: r.seed,
            threshold: r.threshold,
            best_epoch: r.best_epoch,
            train: r.train_report.clone(),
            val: r.val_report.clone(),
            test: r.test_report.clone(),
            pretrained: coverage
                .iter()
                .find(|(s, _)| *s == r.seed)
                .map(|(_, st)| *st),
        };
        write_json(&dir.join("report.json"), &report)?;
        for f in ["checkpoint.json", "train.log", "report.json"] {
            outputs.push(format!("seed-{}/{f}", r.seed));
        }
        println!(
            "seed {}: best epoch {} tau {:.2} held-out P {:.4} R {:.4} F1 {:.4}",
            r.seed,
            r.best_epoch,
            r.threshold,
            r.held_out().precision,
            r.held_out().recall,
            r.held_out().f1
        );
    }
    if runs.len() == RUNS_PER_CONFIG {
        let agg: RunAggregate =
            median_of_runs(runs.iter().map(|r| r.held_out().clone()).collect())?;
        write_json(&a.out.join("aggregate.json"), &agg)?;
        outputs.push("aggregate.json".into());
        println!(
            "median of {RUNS_PER_CONFIG} (seed {}): P {:.4} R {:.4} F1 {:.4}",
            runs[agg.median_index].seed, agg.median.precision, agg.median.recall, agg.median.f1
        );
    }
    let mut inputs: Vec<&Path> = vec![&a.data];
    if let Some(p) = pretrained {
        inputs.push(p);
    }
    if let Some(c) = &a.config.config {
        inputs.push(c);
    }
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    mb.write(
        &a.out,
        serde_json::json!({ "train": cfg, "pretrained": a.pretrained }),
        seeds,
        digest_inputs(&inputs)?,
        &outputs,
    )?;
    Ok(true)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance file (JSON lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Second checkpoint for a paired bootstrap test.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = BOOTSTRAP_SAMPLES)]
    pub samples: usize,
    /// Seed of the bootstrap resampling.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the result and a manifest to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub other: String,
    pub other_report: EvalReport,
    pub bootstrap: BootstrapResult,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalOutput {
    pub model: String,
    pub input: String,
    pub report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

fn load_checkpoint(path: &Path) -> Result<(Model<f64>, Checkpoint)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let model = Model::from_checkpoint(&ck, TrainConfig::default().lr)?;
    Ok((model, ck))
}

fn score(
    model: &Model<f64>,
    ck: &Checkpoint,
    set: &[InstanceChain],
) -> Result<(Vec<twohop::corpus::Label>, EvalReport)> {
    let preds = predict_set(model, set, ck.threshold, ck.decision)?;
    let report = evaluate(&preds, &gold_labels(set))?.with_threshold(ck.threshold);
    Ok((preds, report))
}

pub fn eval(a: EvalArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("eval");
    let (model, ck) = load_checkpoint(&a.model)?;
    let mut relations = RelationVocab::from_names(ck.relations.iter().cloned());
    let set = read_instances(&a.input, &mut relations)?;
    if set.is_empty() {
        bail!("{}: no instances to evaluate", a.input.display());
    }
    if relations.len() != ck.relations.len() {
        bail!(
            "{}: relations outside the checkpoint vocabulary ({} known)",
            a.input.display(),
            ck.relations.len()
        );
    }
    let (preds, report) = score(&model, &ck, &set)?;
    let comparison = match &a.compare {
        None => None,
        Some(path) => {
            let (other, other_ck) = load_checkpoint(path)?;
            if other_ck.relations != ck.relations {
                bail!(
                    "{} and {} use different relation vocabularies",
                    a.model.display(),
                    path.display()
                );
            }
            let (other_preds, other_report) = score(&other, &other_ck, &set)?;
            let bootstrap = bootstrap_significance(
                &preds,
                &other_preds,
                &gold_labels(&set),
                a.samples,
                a.seed,
            )?;
            Some(Comparison {
                other: path.display().to_string(),
                other_report,
                bootstrap,
            })
        }
    };
    let out = EvalOutput {
        model: a.model.display().to_string(),
        input: a.input.display().to_string(),
        report,
        comparison,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("eval.json"), &out)?;
        let mut inputs: Vec<&Path> = vec![&a.model, &a.input];
        if let Some(c) = &a.compare {
            inputs.push(c);
        }
        mb.write(
            dir,
            serde_json::json!({ "samples": a.samples }),
            vec![a.seed],
            digest_inputs(&inputs)?,
            &["eval.json"],
        )?;
    }
    Ok(true)
}
