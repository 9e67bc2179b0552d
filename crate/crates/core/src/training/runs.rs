use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{f1, EvalReport};
use crate::corpus::Label;
use crate::error::{Error, Result};

pub const RUNS_PER_CONFIG: usize = 5;
pub const BOOTSTRAP_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: Vec<EvalReport>,
    /// Position in `runs` of the median report.
    pub median_index: usize,
    pub median: EvalReport,
}

/// Median of exactly five runs by F1 (third of five, ties broken by
/// precision, then recall, then run order).
pub fn median_of_runs(runs: Vec<EvalReport>) -> Result<RunAggregate> {
    if runs.len() != RUNS_PER_CONFIG {
        return Err(Error::Contract(format!(
            "median needs exactly {RUNS_PER_CONFIG} runs, got {}",
            runs.len()
        )));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&runs[a], &runs[b]);
        x.f1.total_cmp(&y.f1)
            .then(x.precision.total_cmp(&y.precision))
            .then(x.recall.total_cmp(&y.recall))
    });
    let median_index = order[RUNS_PER_CONFIG / 2];
    Ok(RunAggregate {
        median: runs[median_index].clone(),
        median_index,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub f1_a: f64,
    pub f1_b: f64,
    /// True when `b` scored higher on the full set and the roles were swapped.
    pub swapped: bool,
    pub samples: usize,
    pub p_value: f64,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    predicted: u32,
    gold: u32,
    correct: u32,
}

impl Tally {
    fn of(pred: Label, gold: Label) -> Self {
        Tally {
            predicted: u32::from(pred.is_some()),
            gold: u32::from(gold.is_some()),
            correct: u32::from(pred.is_some() && pred == gold),
        }
    }

    fn add(&mut self, o: Tally) {
        self.predicted += o.predicted;
        self.gold += o.gold;
        self.correct += o.correct;
    }

    fn f1(&self) -> f64 {
        let r = |a: u32, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        f1(r(self.correct, self.predicted), r(self.correct, self.gold))
    }
}

/// Paired bootstrap over instance indices. The p-value is the share of
/// resamples where the weaker system on the full set scores at least as
/// high as the stronger one.
pub fn bootstrap_significance(
    preds_a: &[Label],
    preds_b: &[Label],
    gold: &[Label],
    samples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if preds_a.len() != gold.len() || preds_b.len() != gold.len() {
        return Err(Error::Input(format!(
            "prediction lists of length {} and {} for {} gold labels",
            preds_a.len(),
            preds_b.len(),
            gold.len()
        )));
    }
    if gold.is_empty() || samples == 0 {
        return Err(Error::Input(
            "bootstrap needs instances and at least one sample".into(),
        ));
    }
    let ta: Vec<Tally> = preds_a
        .iter()
        .zip(gold)
        .map(|(&p, &g)| Tally::of(p, g))
        .collect();
    let tb: Vec<Tally> = preds_b
        .iter()
        .zip(gold)
        .map(|(&p, &g)| Tally::of(p, g))
        .collect();
    let full = |t: &[Tally]| {
        let mut s = Tally::default();
        t.iter().for_each(|x| s.add(*x));
        s.f1()
    };
    let (f1_a, f1_b) = (full(&ta), full(&tb));
    let swapped = f1_b > f1_a;
    let (hi, lo) = if swapped { (&tb, &ta) } else { (&ta, &tb) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gold.len();
    let mut at_least = 0usize;
    for _ in 0..samples {
        let (mut sh, mut sl) = (Tally::default(), Tally::default());
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            sh.add(hi[i]);
            sl.add(lo[i]);
        }
        if sl.f1() >= sh.f1() {
            at_least += 1;
        }
    }
    Ok(BootstrapResult {
        f1_a,
        f1_b,
        swapped,
        samples,
        p_value: at_least as f64 / samples as f64,
    })
}
