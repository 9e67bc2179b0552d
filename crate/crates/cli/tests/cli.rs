use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use twohop::corpus::io::{
    read_instances, read_kb, read_records, read_relations, write_kb, write_records,
};
use twohop::corpus::sample::zoo_lake_record;

const TINY: &[&str] = &[
    "--set",
    "d_w=4",
    "--set",
    "d_z=2",
    "--set",
    "max_epochs=2",
    "--set",
    "batch_size=8",
];

fn twohop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twohop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = twohop(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(args: &[&str]) -> String {
    let out = twohop(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn same_bytes(a: &Path, b: &Path, files: &[&str]) {
    for f in files {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

/// Synthetic corpus and its dataset directory.
fn dataset(tmp: &TempDir, records: &str) -> PathBuf {
    let s = tmp.path().join("synth");
    let d = tmp.path().join("data");
    ok(&["synth", "--out", p(&s), "--records", records, "--seed", "3"]);
    ok(&[
        "build-dataset",
        "--in",
        p(&s.join("records.jsonl")),
        "--kb",
        p(&s.join("kb.tsv")),
        "--out",
        p(&d),
        "--balance",
    ]);
    d
}

#[test]
fn synth_is_seeded_and_its_stats_parse_back() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--out", p(&a), "--records", "30", "--seed", "4"]);
    ok(&["synth", "--out", p(&b), "--records", "30", "--seed", "4"]);
    same_bytes(&a, &b, &["records.jsonl", "kb.tsv", "stats.json"]);

    let mut kb = read_kb(&a.join("kb.tsv")).unwrap();
    let records = read_records(&a.join("records.jsonl"), &mut kb.relations).unwrap();
    let stats = json(&a.join("stats.json"));
    assert_eq!(stats["records"], records.len());
    assert_eq!(stats["kb_triples"], kb.len());
    let per: u64 = stats["per_relation"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(per as usize, records.len());

    let c = tmp.path().join("c");
    ok(&["synth", "--out", p(&c), "--records", "30", "--seed", "5"]);
    assert_ne!(
        fs::read(a.join("records.jsonl")).unwrap(),
        fs::read(c.join("records.jsonl")).unwrap()
    );
}

#[test]
fn zoo_lake_record_gives_one_positive_and_one_none() {
    let tmp = TempDir::new().unwrap();
    let (record, kb) = zoo_lake_record();
    let (rec_path, kb_path) = (tmp.path().join("records.jsonl"), tmp.path().join("kb.tsv"));
    write_records(&rec_path, &[record], &kb.relations).unwrap();
    write_kb(&kb_path, &kb).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "build-dataset",
        "--in",
        p(&rec_path),
        "--kb",
        p(&kb_path),
        "--out",
        p(&out),
    ]);

    let mut relations = read_relations(&out.join("relations.txt")).unwrap();
    let mut all = Vec::new();
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        all.extend(read_instances(&out.join(f), &mut relations).unwrap());
    }
    assert_eq!(all.len(), 2);
    assert_eq!(all.iter().filter(|c| c.is_positive()).count(), 1);
    let pos = all.iter().find(|c| c.is_positive()).unwrap();
    assert_eq!(
        (pos.subject.as_str(), pos.object.as_str()),
        ("zoo lake", "gauteng")
    );
    let none = all.iter().find(|c| !c.is_positive()).unwrap();
    assert_eq!(none.object, "tanzania");
}

#[test]
fn balance_and_rerun_identity() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "80");
    let mut relations = read_relations(&d.join("relations.txt")).unwrap();
    for f in ["train.jsonl", "val.jsonl"] {
        let set = read_instances(&d.join(f), &mut relations).unwrap();
        let pos = set.iter().filter(|c| c.is_positive()).count();
        assert_eq!(pos, set.len() - pos, "{f}");
    }
    let s = tmp.path().join("synth");
    let again = tmp.path().join("again");
    ok(&[
        "build-dataset",
        "--in",
        p(&s.join("records.jsonl")),
        "--kb",
        p(&s.join("kb.tsv")),
        "--out",
        p(&again),
        "--balance",
    ]);
    same_bytes(
        &d,
        &again,
        &[
            "train.jsonl",
            "val.jsonl",
            "test.jsonl",
            "relations.txt",
            "stats.json",
        ],
    );
    let (m1, m2) = (
        json(&d.join("manifest.json")),
        json(&again.join("manifest.json")),
    );
    assert_eq!(m1["inputs"], m2["inputs"]);
    assert_eq!(m1["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = TempDir::new().unwrap();
    let (record, kb) = zoo_lake_record();
    let (rec_path, kb_path) = (tmp.path().join("records.jsonl"), tmp.path().join("kb.tsv"));
    write_records(&rec_path, &[record], &kb.relations).unwrap();
    let mut text = fs::read_to_string(&rec_path).unwrap();
    text.push_str("{not json\n");
    fs::write(&rec_path, text).unwrap();
    write_kb(&kb_path, &kb).unwrap();
    let err = fails(&[
        "build-dataset",
        "--in",
        p(&rec_path),
        "--kb",
        p(&kb_path),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert!(err.contains("records.jsonl:2"), "{err}");

    fs::write(&kb_path, "zoo lake\tonly two fields\n").unwrap();
    let err = fails(&[
        "build-dataset",
        "--in",
        p(&rec_path),
        "--kb",
        p(&kb_path),
        "--out",
        p(&tmp.path().join("o")),
    ]);
    assert!(err.contains("kb.tsv:1"), "{err}");
}

#[test]
fn five_seeds_give_five_checkpoints_and_an_aggregate() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "40");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut args = vec![
        "train",
        "--in",
        p(&d),
        "--model",
        "hegcn",
        "--seeds",
        "1..5",
        "--jobs",
        "2",
        "--out",
        p(&a),
    ];
    args.extend(TINY);
    ok(&args);
    for s in 1..=5 {
        for f in ["checkpoint.json", "train.log", "report.json"] {
            assert!(
                a.join(format!("seed-{s}")).join(f).is_file(),
                "seed-{s}/{f}"
            );
        }
    }
    let agg = json(&a.join("aggregate.json"));
    assert_eq!(agg["runs"].as_array().unwrap().len(), 5);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([1, 2, 3, 4, 5]));
    assert_eq!(manifest["command"], "train");

    let at = args.iter().position(|x| *x == p(&a)).unwrap();
    args[at] = p(&b);
    ok(&args);
    let mut files = vec!["aggregate.json".to_string()];
    for s in 1..=5 {
        for f in ["checkpoint.json", "train.log", "report.json"] {
            files.push(format!("seed-{s}/{f}"));
        }
    }
    same_bytes(
        &a,
        &b,
        &files.iter().map(String::as_str).collect::<Vec<_>>(),
    );
}

#[test]
fn config_file_sets_dimensions_and_layers() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "30");
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "# tiny\nd_w = 5\nd_z = 3\nl1 = 2\nl2 = 3\nmax_epochs = 1\n",
    )
    .unwrap();
    let out = tmp.path().join("t");
    ok(&[
        "train",
        "--in",
        p(&d),
        "--config",
        p(&cfg),
        "--set",
        "d_z=1",
        "--seed",
        "2",
        "--out",
        p(&out),
    ]);
    let ck = json(&out.join("seed-2/checkpoint.json"));
    let c = &ck["config"];
    assert_eq!((c["d_w"].as_u64(), c["d_z"].as_u64()), (Some(5), Some(1)));
    assert_eq!((c["l1"].as_u64(), c["l2"].as_u64()), (Some(2), Some(3)));
    assert!(!out.join("aggregate.json").exists());

    fs::write(&cfg, "d_w = 5\nwidth = 3\n").unwrap();
    let err = fails(&[
        "train",
        "--in",
        p(&d),
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ]);
    assert!(err.contains("run.cfg") && err.contains('2'), "{err}");
}

#[test]
fn pretrained_vectors_missing_and_present() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "30");
    let out = tmp.path().join("t");
    let missing = tmp.path().join("nope.vec");
    let mut args = vec![
        "train",
        "--in",
        p(&d),
        "--pretrained",
        p(&missing),
        "--out",
        p(&out),
    ];
    args.extend(TINY);
    let err = fails(&args);
    assert!(err.contains("nope.vec"), "{err}");
    assert!(!out.exists());

    let vecs = tmp.path().join("w.vec");
    fs::write(&vecs, ". 0.1 0.2 0.3 0.4\nunseenword 1 1 1 1\n").unwrap();
    args[4] = p(&vecs);
    ok(&args);
    let report = json(&out.join("seed-1/report.json"));
    assert_eq!(report["pretrained"]["found"], 1);
    let ck = json(&out.join("seed-1/checkpoint.json"));
    let words: Vec<&str> = ck["words"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_str().unwrap())
        .collect();
    assert!(words.contains(&"."));

    fs::write(&vecs, ". 0.1 0.2\n").unwrap();
    assert!(fails(&args).contains("d_w"));
}

#[test]
fn eval_reports_and_compares() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "40");
    let out = tmp.path().join("t");
    let mut args = vec!["train", "--in", p(&d), "--seeds", "1,2", "--out", p(&out)];
    args.extend(TINY);
    ok(&args);
    let (c1, c2) = (
        out.join("seed-1/checkpoint.json"),
        out.join("seed-2/checkpoint.json"),
    );
    let test = d.join("test.jsonl");

    let single: Value =
        serde_json::from_slice(&ok(&["eval", "--model", p(&c1), "--in", p(&test)]).stdout).unwrap();
    for k in ["precision", "recall", "f1", "threshold"] {
        assert!(single["report"][k].is_number(), "{k}");
    }
    assert!(single.get("comparison").is_none());
    let train_report = json(&out.join("seed-1/report.json"));
    assert_eq!(single["report"], train_report["test"]);

    let eval_dir = tmp.path().join("e");
    let cmp = ok(&[
        "eval",
        "--model",
        p(&c1),
        "--in",
        p(&test),
        "--compare",
        p(&c2),
        "--samples",
        "300",
        "--out",
        p(&eval_dir),
    ]);
    let cmp: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    let pv = cmp["comparison"]["bootstrap"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pv));
    assert_eq!(cmp["comparison"]["bootstrap"]["samples"], 300);
    assert_eq!(json(&eval_dir.join("eval.json")), cmp);
    assert_eq!(
        json(&eval_dir.join("manifest.json"))["inputs"]
            .as_array()
            .unwrap()
            .len(),
        3
    );

    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert!(fails(&["eval", "--model", p(&c1), "--in", p(&empty)]).contains("no instances"));
}

#[test]
fn ablation_rows_follow_the_grid() {
    let tmp = TempDir::new().unwrap();
    let d = dataset(&tmp, "30");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut args = vec![
        "ablate",
        "--in",
        p(&d),
        "--grid",
        "layers=1x1,2x1",
        "--jobs",
        "2",
        "--out",
        p(&a),
    ];
    args.extend(TINY);
    let out = ok(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows = json(&a.join("ablation.json"));
    let labels: Vec<&str> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["L1=1 L2=1", "L1=2 L2=1"]);
    assert_eq!(rows[0]["f1s"].as_array().unwrap().len(), 5);
    assert!(stdout.lines().nth(1).unwrap().starts_with("L1=1 L2=1"));
    assert_eq!(stdout, fs::read_to_string(a.join("ablation.txt")).unwrap());

    let at = args.iter().position(|x| *x == p(&a)).unwrap();
    args[at] = p(&b);
    ok(&args);
    same_bytes(&a, &b, &["ablation.json", "ablation.txt"]);

    let err = fails(&[
        "ablate",
        "--in",
        p(&d),
        "--grid",
        "edges=full,-emg7",
        "--out",
        p(&tmp.path().join("c")),
    ]);
    assert!(err.contains("emg7"), "{err}");
    assert!(!tmp.path().join("c").exists());
}

#[test]
fn gradcheck_passes_and_reproduces() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = ok(&["gradcheck", "--seed", "7", "--trials", "1", "--out", p(&a)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout
        .lines()
        .filter(|l| l.starts_with("PASS"))
        .any(|l| l.contains("hegcn_forward")));
    assert!(!stdout.contains("FAIL"));
    ok(&["gradcheck", "--seed", "7", "--trials", "1", "--out", p(&b)]);
    same_bytes(&a, &b, &["gradcheck.json"]);
}

#[test]
fn gradcheck_failure_names_op_and_coordinate() {
    let out = twohop(&["gradcheck", "--trials", "1", "--tolerance", "0"]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout
        .lines()
        .find(|l| l.starts_with("FAIL"))
        .expect("a failing line");
    let worst = line
        .split_whitespace()
        .find(|w| w.starts_with("worst="))
        .expect("worst coordinate");
    assert!(worst.ends_with(']') && worst.contains('['), "{line}");
}

#[test]
fn unknown_flags_and_commands_exit_nonzero() {
    fails(&["frobnicate"]);
    fails(&["train", "--in", "x"]);
    fails(&["gradcheck", "--trials", "many"]);
}
