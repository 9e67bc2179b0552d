use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use twohop::corpus::io::{
    read_kb, read_records, write_instances, write_kb, write_records, write_relations,
};
use twohop::corpus::{
    dataset_stats, generate_synthetic, KbStore, StatsReport, SynthConfig, WikiHopRecord,
};
use twohop::training::experiment::build_splits;

use crate::manifest::{digest_inputs, write_json, ManifestBuilder};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub relations: usize,
    #[arg(long, default_value_t = 200)]
    pub records: usize,
    /// Number of filler words.
    #[arg(long, default_value_t = 60)]
    pub vocab: usize,
    /// Most filler sentences per document.
    #[arg(long, default_value_t = 2)]
    pub max_fillers: usize,
}

/// Counts written next to a records file; recomputable from the files.
#[derive(Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordStats {
    pub records: usize,
    pub kb_triples: usize,
    pub per_relation: BTreeMap<String, usize>,
}

impl RecordStats {
    pub fn of(records: &[WikiHopRecord], kb: &KbStore) -> Self {
        let mut per_relation = BTreeMap::new();
        for r in records {
            *per_relation
                .entry(kb.relations.name(r.relation).to_string())
                .or_insert(0) += 1;
        }
        Self {
            records: records.len(),
            kb_triples: kb.len(),
            per_relation,
        }
    }
}

pub fn synth(a: SynthArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("synth");
    let cfg = SynthConfig {
        n_relations: a.relations,
        n_records: a.records,
        vocab: a.vocab,
        max_fillers: a.max_fillers,
        seed: a.seed,
    };
    let (records, kb) = generate_synthetic(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_records(&a.out.join("records.jsonl"), &records, &kb.relations)?;
    write_kb(&a.out.join("kb.tsv"), &kb)?;
    write_json(&a.out.join("stats.json"), &RecordStats::of(&records, &kb))?;
    mb.write(
        &a.out,
        serde_json::to_value(&cfg)?,
        vec![a.seed],
        vec![],
        &["records.jsonl", "kb.tsv", "stats.json"],
    )?;
    println!(
        "{} records, {} KB triples -> {}",
        records.len(),
        kb.len(),
        a.out.display()
    );
    Ok(true)
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// QA records, one JSON object per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// KB triples, `subject<TAB>relation<TAB>object` per line.
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Subsample None instances to the positive count in train and val.
    #[arg(long)]
    pub balance: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Share of records held out for test.
    #[arg(long, default_value_t = 0.2)]
    pub test_share: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitStats {
    pub train: StatsReport,
    pub val: StatsReport,
    pub test: StatsReport,
}

pub fn build_dataset(a: BuildArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("build-dataset");
    let mut kb = read_kb(&a.kb)?;
    let records = read_records(&a.input, &mut kb.relations)?;
    let splits = build_splits(records, &kb, a.test_share, a.balance, a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (name, set) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        write_instances(&a.out.join(format!("{name}.jsonl")), set, &splits.relations)?;
    }
    write_relations(&a.out.join("relations.txt"), &splits.relations)?;
    let stats = SplitStats {
        train: dataset_stats(&splits.train),
        val: dataset_stats(&splits.val),
        test: dataset_stats(&splits.test),
    };
    write_json(&a.out.join("stats.json"), &stats)?;
    mb.write(
        &a.out,
        serde_json::json!({ "balance": a.balance, "test_share": a.test_share }),
        vec![a.seed],
        digest_inputs(&[&a.input, &a.kb])?,
        &[
            "train.jsonl",
            "val.jsonl",
            "test.jsonl",
            "relations.txt",
            "stats.json",
        ],
    )?;
    println!(
        "train {} / val {} / test {} instances -> {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        a.out.display()
    );
    Ok(true)
}
