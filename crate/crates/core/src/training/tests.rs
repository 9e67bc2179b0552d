use proptest::prelude::*;

use super::experiment::{run_once, synthetic_splits};
use super::*;
use crate::corpus::{Label, RelationId, SynthConfig};
use crate::model::{DecisionRule, ModelKind};
use crate::numerics::Tensor;

fn r(i: u32) -> Label {
    Some(RelationId(i))
}

const RULE: DecisionRule = DecisionRule::ArgmaxThenThreshold;

#[test]
fn predict_threshold_edges() {
    let p = [0.5, 0.3, 0.2];
    assert_eq!(predict(&p, 0.0, RULE), r(0));
    assert_eq!(predict(&p, 1.0, RULE), None);
    assert_eq!(predict(&[0.25; 4], 0.5, RULE), None);
    assert_eq!(predict(&[0.2, 0.1, 0.7], 0.0, RULE), None);
    assert_eq!(
        predict(&[0.2, 0.1, 0.7], 0.0, DecisionRule::MaxOverRelations),
        r(0)
    );
    assert_eq!(
        predict(&[0.2, 0.1, 0.7], 0.3, DecisionRule::MaxOverRelations),
        None
    );
}

#[test]
fn evaluate_hand_counts() {
    let rep = evaluate(&[r(1), None, r(3)], &[r(1), r(2), None]).unwrap();
    assert_eq!((rep.precision, rep.recall, rep.f1), (0.5, 0.5, 0.5));
    let rep = evaluate(&[None, None, None], &[r(0), None, r(1)]).unwrap();
    assert_eq!((rep.precision, rep.recall, rep.f1), (0.0, 0.0, 0.0));
    let gold = [r(0), None, r(1), r(1)];
    let rep = evaluate(&gold, &gold).unwrap();
    assert_eq!((rep.precision, rep.recall, rep.f1), (1.0, 1.0, 1.0));
    assert_eq!(
        rep.per_relation[&1],
        RelationCounts {
            predicted: 2,
            gold: 2,
            correct: 2
        }
    );
    assert_eq!(rep.n_instances, 4);
    assert!(evaluate(&[None], &[]).is_err());
}

#[test]
fn threshold_is_zero_when_nothing_depends_on_it() {
    let probs = vec![vec![0.1, 0.9], vec![0.2, 0.8]];
    let (tau, rep) = tune_threshold(&probs, &[r(0), None], RULE).unwrap();
    assert_eq!(tau, 0.0);
    assert_eq!(rep.f1, 0.0);
}

#[test]
fn threshold_separating_right_from_wrong_positives() {
    let probs = vec![
        vec![0.6, 0.2, 0.1, 0.1],
        vec![0.1, 0.45, 0.3, 0.15],
        vec![0.34, 0.33, 0.33, 0.0],
        vec![0.3, 0.32, 0.2, 0.18],
    ];
    let gold = [r(0), r(1), None, r(2)];
    let (tau, rep) = tune_threshold(&probs, &gold, RULE).unwrap();
    assert_eq!(tau, 0.35);
    assert!((rep.f1 - 0.8).abs() < 1e-12);
    assert!(tune_threshold(&[], &[], RULE).is_err());
}

fn report(f1: f64) -> EvalReport {
    EvalReport {
        precision: f1,
        recall: f1,
        f1,
        threshold: None,
        per_relation: Default::default(),
        n_instances: 1,
    }
}

#[test]
fn median_of_five() {
    let agg = median_of_runs([0.4, 0.1, 0.5, 0.3, 0.2].map(report).to_vec()).unwrap();
    assert_eq!(agg.median.f1, 0.3);
    assert_eq!(agg.median_index, 3);
    assert_eq!(median_of_runs(vec![report(0.7); 5]).unwrap().median.f1, 0.7);
    assert!(median_of_runs(vec![report(0.7); 4]).is_err());
    assert!(median_of_runs(vec![report(0.7); 6]).is_err());
}

#[test]
fn bootstrap_identical_and_extreme() {
    let gold: Vec<Label> = (0..1000).map(|i| r(i % 3)).collect();
    let same = bootstrap_significance(&gold, &gold, &gold, 2000, 1).unwrap();
    assert!(same.p_value > 0.9);
    let wrong: Vec<Label> = (0..1000).map(|i| r((i + 1) % 3)).collect();
    let res = bootstrap_significance(&gold, &wrong, &gold, 2000, 1).unwrap();
    assert!(res.p_value < 0.001);
    let flipped = bootstrap_significance(&wrong, &gold, &gold, 2000, 1).unwrap();
    assert!(flipped.swapped && flipped.p_value < 0.001);
    assert_eq!(
        bootstrap_significance(&gold, &wrong, &gold, 500, 9).unwrap(),
        bootstrap_significance(&gold, &wrong, &gold, 500, 9).unwrap()
    );
    assert!(bootstrap_significance(&gold[..3], &gold, &gold, 10, 1).is_err());
}

#[test]
fn config_text_round_trip_and_errors() {
    let mut c = TrainConfig::default();
    c.apply_text(
        "# small\nmodel = cnn\nd_w = 16 \nd_z=4\ncnn_widths = 2,3\nwithout = emg1, eg2\n",
        "cfg",
    )
    .unwrap();
    assert_eq!(c.model.kind, ModelKind::Cnn);
    assert_eq!((c.model.d_w, c.model.d_z), (16, 4));
    assert_eq!(c.model.cnn_widths, vec![2, 3]);
    assert!(!c.model.edges.emg1 && !c.model.edges.eg2 && c.model.edges.emg2);
    let mut back = TrainConfig::default();
    back.apply_text(&c.to_text(), "round").unwrap();
    assert_eq!(back, c);

    let err = TrainConfig::default()
        .apply_text("d_w = 4\nbogus = 1\n", "cfg")
        .unwrap_err();
    assert!(matches!(err, crate::Error::Parse { line: 2, .. }), "{err}");
    assert!(TrainConfig::default()
        .apply_text("no equals sign", "cfg")
        .is_err());
    assert!(TrainConfig::default()
        .apply_text("edges = emg9", "cfg")
        .is_err());
    assert!(TrainConfig::default()
        .apply_text("batch_size = 0", "cfg")
        .is_err());
}

fn tiny() -> (experiment::Splits, TrainConfig) {
    let splits = synthetic_splits(&SynthConfig {
        n_records: 20,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut cfg = TrainConfig::default();
    cfg.apply_text("d_w = 6\nd_z = 2\nmax_epochs = 2\nbatch_size = 8", "tiny")
        .unwrap();
    (splits, cfg)
}

#[test]
fn empty_training_set_is_an_input_error() {
    let (splits, cfg) = tiny();
    let model = fresh_model(&cfg, &splits.train, &splits.relations).unwrap();
    assert!(matches!(
        train(model.clone(), &[], &splits.val, &cfg),
        Err(crate::Error::Input(_))
    ));
    assert!(matches!(
        train(model, &splits.train, &[], &cfg),
        Err(crate::Error::Input(_))
    ));
}

#[test]
fn first_batch_loss_with_zero_classifier() {
    let (splits, cfg) = tiny();
    let mut model = fresh_model(&cfg, &splits.train, &splits.relations).unwrap();
    let (w, b) = model.classifier();
    for id in [w, b] {
        let shape = model.store.get(id).shape().to_vec();
        model.store.set(id, Tensor::zeros(&shape)).unwrap();
    }
    let batch: Vec<_> = splits.train.iter().take(cfg.batch_size).collect();
    let loss = train_step(&mut model, &batch, cfg.seed, 1, 0).unwrap();
    assert!((loss - ((splits.relations.len() + 1) as f64).ln()).abs() < 1e-6);
}

#[test]
fn equal_seeds_give_identical_checkpoints_and_reports() {
    let (splits, cfg) = tiny();
    let a = run_once(&splits, &cfg).unwrap();
    let b = run_once(&splits, &cfg).unwrap();
    assert_eq!(
        a.checkpoint(&cfg).to_json().unwrap(),
        b.checkpoint(&cfg).to_json().unwrap()
    );
    assert_eq!(
        serde_json::to_string(a.held_out()).unwrap(),
        serde_json::to_string(b.held_out()).unwrap()
    );
    assert!(a.logs.iter().all(|l| l.mean_loss.is_finite()));
    assert!(a.model.store.all_finite());
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(None), (0u32..4).prop_map(|i| Some(RelationId(i)))]
}

fn prob_row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 5).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn f1_matches_a_recount(pairs in prop::collection::vec((label(), label()), 0..40)) {
        let (pred, gold): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let rep = evaluate(&pred, &gold).unwrap();
        let tp = pred.iter().zip(&gold).filter(|(p, g)| p.is_some() && p == g).count() as f64;
        let np = pred.iter().filter(|p| p.is_some()).count() as f64;
        let ng = gold.iter().filter(|g| g.is_some()).count() as f64;
        let p = if np > 0.0 { tp / np } else { 0.0 };
        let r = if ng > 0.0 { tp / ng } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prop_assert_eq!(rep.f1, f);
    }

    #[test]
    fn tuned_threshold_is_the_first_grid_maximum(rows in prop::collection::vec((prob_row(), label()), 1..25)) {
        let (probs, gold): (Vec<Vec<f64>>, Vec<Label>) = rows.into_iter().unzip();
        let (tau, rep) = tune_threshold(&probs, &gold, RULE).unwrap();
        for t in threshold_grid() {
            let preds: Vec<Label> = probs.iter().map(|p| predict(p, t, RULE)).collect();
            let f = evaluate(&preds, &gold).unwrap().f1;
            prop_assert!(rep.f1 >= f);
            if t < tau {
                prop_assert!(f < rep.f1);
            }
        }
    }

    #[test]
    fn median_ignores_run_order(mut f1s in prop::collection::vec(0.0f64..1.0, 5), rot in 0usize..5) {
        let a = median_of_runs(f1s.iter().copied().map(report).collect()).unwrap().median.f1;
        f1s.rotate_left(rot);
        let b = median_of_runs(f1s.iter().copied().map(report).collect()).unwrap().median.f1;
        prop_assert_eq!(a, b);
    }
}
