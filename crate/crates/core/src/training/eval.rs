use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceChain, Label, RelationId};
use crate::error::{Error, Result};
use crate::model::{DecisionRule, Model};
use crate::numerics::Scalar;

/// Thresholds tried by [`tune_threshold`]: 0.00, 0.05, ..., 0.95.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (0..20).map(|k| k as f64 / 20.0)
}

/// Label for one probability vector (None last).
pub fn predict(probs: &[f64], tau: f64, rule: DecisionRule) -> Label {
    let n_rel = probs.len().saturating_sub(1);
    let argmax = |xs: &[f64]| {
        xs.iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((i, p)),
            })
    };
    let pick = match rule {
        DecisionRule::ArgmaxThenThreshold => argmax(probs),
        DecisionRule::MaxOverRelations => argmax(&probs[..n_rel]),
    };
    match pick {
        Some((i, p)) if i < n_rel && p >= tau => Some(RelationId(i as u32)),
        _ => None,
    }
}

/// Positive predictions, gold positives and their agreements for one relation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl RelationCounts {
    fn add(&mut self, o: RelationCounts) {
        self.predicted += o.predicted;
        self.gold += o.gold;
        self.correct += o.correct;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Scores over the positive relations; None/None agreements do not count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: Option<f64>,
    pub per_relation: BTreeMap<usize, RelationCounts>,
    pub n_instances: usize,
}

impl EvalReport {
    pub fn totals(&self) -> RelationCounts {
        let mut t = RelationCounts::default();
        for c in self.per_relation.values() {
            t.add(*c);
        }
        t
    }

    pub fn with_threshold(mut self, tau: f64) -> Self {
        self.threshold = Some(tau);
        self
    }
}

fn outcome(pred: Label, gold: Label) -> (Option<usize>, Option<usize>, bool) {
    let p = pred.map(RelationId::index);
    let g = gold.map(RelationId::index);
    (p, g, p.is_some() && p == g)
}

pub fn evaluate(predictions: &[Label], gold: &[Label]) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let mut per_relation: BTreeMap<usize, RelationCounts> = BTreeMap::new();
    for (&p, &g) in predictions.iter().zip(gold) {
        let (p, g, hit) = outcome(p, g);
        if let Some(p) = p {
            let c = per_relation.entry(p).or_default();
            c.predicted += 1;
            c.correct += usize::from(hit);
        }
        if let Some(g) = g {
            per_relation.entry(g).or_default().gold += 1;
        }
    }
    let mut total = RelationCounts::default();
    for c in per_relation.values() {
        total.add(*c);
    }
    Ok(EvalReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        threshold: None,
        per_relation,
        n_instances: gold.len(),
    })
}

/// Grid threshold with the highest F1; ties go to the smallest threshold.
pub fn tune_threshold(
    probs: &[Vec<f64>],
    gold: &[Label],
    rule: DecisionRule,
) -> Result<(f64, EvalReport)> {
    if probs.is_empty() {
        return Err(Error::Input(
            "threshold tuning needs a nonempty validation set".into(),
        ));
    }
    let mut best: Option<(f64, EvalReport)> = None;
    for tau in threshold_grid() {
        let preds: Vec<Label> = probs.iter().map(|p| predict(p, tau, rule)).collect();
        let report = evaluate(&preds, gold)?.with_threshold(tau);
        if best.as_ref().map_or(true, |(_, b)| report.f1 > b.f1) {
            best = Some((tau, report));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

pub fn all_probabilities<T: Scalar>(
    model: &Model<T>,
    set: &[InstanceChain],
) -> Result<Vec<Vec<f64>>> {
    set.iter().map(|c| model.probabilities(c)).collect()
}

pub fn gold_labels(set: &[InstanceChain]) -> Vec<Label> {
    set.iter().map(|c| c.label).collect()
}

/// Predictions of `model` on `set` at a fixed threshold.
pub fn predict_set<T: Scalar>(
    model: &Model<T>,
    set: &[InstanceChain],
    tau: f64,
    rule: DecisionRule,
) -> Result<Vec<Label>> {
    Ok(all_probabilities(model, set)?
        .iter()
        .map(|p| predict(p, tau, rule))
        .collect())
}

pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    set: &[InstanceChain],
    tau: f64,
    rule: DecisionRule,
) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let preds = predict_set(model, set, tau, rule)?;
    Ok(evaluate(&preds, &gold_labels(set))?.with_threshold(tau))
}
