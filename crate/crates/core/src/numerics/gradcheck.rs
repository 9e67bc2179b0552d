//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::uniform;
use super::{lstm_step, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Anything that owns the parameters a loss is differentiated against.
pub trait HasParams {
    fn params(&self) -> &ParamStore<f64>;
    fn params_mut(&mut self) -> &mut ParamStore<f64>;
}

impl HasParams for ParamStore<f64> {
    fn params(&self) -> &ParamStore<f64> {
        self
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

impl FdConfig {
    pub fn relative_error(&self, analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(self.floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub param: String,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub coords: usize,
    /// Coordinate with the largest relative error.
    pub worst: Option<Discrepancy>,
    pub passed: bool,
}

/// Compares the tape gradient of `loss` with central differences for every
/// coordinate of every parameter.
pub fn check_gradients<S: HasParams>(
    name: &str,
    subject: &mut S,
    loss: impl Fn(&S, &mut Tape<f64>) -> Result<Var>,
    cfg: &FdConfig,
) -> Result<CheckOutcome> {
    let eval = |s: &S| -> Result<f64> {
        let mut tape = Tape::new();
        let l = loss(s, &mut tape)?;
        Ok(tape.value(l).data()[0])
    };
    let grads = {
        let mut tape = Tape::new();
        let l = loss(subject, &mut tape)?;
        tape.backward(l)?.into_params()
    };
    let ids: Vec<_> = subject.params().ids().collect();
    let mut worst: Option<Discrepancy> = None;
    let mut coords = 0;
    for id in ids {
        let n = subject.params().get(id).len();
        for k in 0..n {
            let orig = subject.params().get(id).data()[k];
            subject.params_mut().get_mut(id).data_mut()[k] = orig + cfg.step;
            let up = eval(subject)?;
            subject.params_mut().get_mut(id).data_mut()[k] = orig - cfg.step;
            let down = eval(subject)?;
            subject.params_mut().get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let rel_err = cfg.relative_error(analytic, numeric);
            coords += 1;
            if worst.as_ref().map_or(true, |w| rel_err > w.rel_err) {
                worst = Some(Discrepancy {
                    param: subject.params().name(id).to_string(),
                    coord: k,
                    analytic,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    let passed = worst.as_ref().map_or(true, |w| w.rel_err < cfg.tolerance);
    Ok(CheckOutcome {
        name: name.to_string(),
        coords,
        worst,
        passed,
    })
}

/// Values in `±[0.1, 1.1]`, away from activation kinks.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let t: Tensor<f64> = uniform(shape, 1.0, rng);
    t.map(|x| x.signum() * (0.1 + x.abs()))
}

type OpLoss = fn(&ParamStore<f64>, &mut Tape<f64>, &Tensor<f64>) -> Result<Var>;

/// `sum(out ⊙ r)` so every output coordinate gets its own weight.
fn weighted(tape: &mut Tape<f64>, out: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = tape.constant(r.clone());
    let m = tape.mul(out, r)?;
    Ok(tape.sum(m))
}

fn p(store: &ParamStore<f64>, tape: &mut Tape<f64>, name: &str) -> Var {
    tape.param(store, store.id(name).expect("registered"))
}

struct OpCase {
    name: &'static str,
    params: Vec<(&'static str, Vec<usize>)>,
    out_shape: Vec<usize>,
    loss: OpLoss,
}

fn op_cases() -> Vec<OpCase> {
    fn case(
        name: &'static str,
        params: Vec<(&'static str, Vec<usize>)>,
        out_shape: Vec<usize>,
        loss: OpLoss,
    ) -> OpCase {
        OpCase {
            name,
            params,
            out_shape,
            loss,
        }
    }
    vec![
        case(
            "matmul",
            vec![("a", vec![3, 4]), ("b", vec![4, 2])],
            vec![3, 2],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.matmul(a, b)?;
                weighted(t, o, r)
            },
        ),
        case(
            "transpose",
            vec![("a", vec![3, 2])],
            vec![2, 3],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.transpose(a);
                weighted(t, o, r)
            },
        ),
        case(
            "add",
            vec![("a", vec![2, 3]), ("b", vec![2, 3])],
            vec![2, 3],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.add(a, b)?;
                weighted(t, o, r)
            },
        ),
        case(
            "add_row",
            vec![("a", vec![3, 2]), ("b", vec![1, 2])],
            vec![3, 2],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.add_row(a, b)?;
                weighted(t, o, r)
            },
        ),
        case(
            "mul",
            vec![("a", vec![2, 3]), ("b", vec![2, 3])],
            vec![2, 3],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.mul(a, b)?;
                weighted(t, o, r)
            },
        ),
        case("scale", vec![("a", vec![2, 2])], vec![2, 2], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.scale(a, -1.7);
            weighted(t, o, r)
        }),
        case("relu", vec![("a", vec![3, 3])], vec![3, 3], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.relu(a);
            weighted(t, o, r)
        }),
        case("tanh", vec![("a", vec![3, 3])], vec![3, 3], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.tanh(a);
            weighted(t, o, r)
        }),
        case("sigmoid", vec![("a", vec![3, 3])], vec![3, 3], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.sigmoid(a);
            weighted(t, o, r)
        }),
        case("softmax", vec![("a", vec![2, 4])], vec![2, 4], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.softmax(a)?;
            weighted(t, o, r)
        }),
        case(
            "nll_from_logits",
            vec![("a", vec![1, 5])],
            vec![1, 1],
            |s, t, _| {
                let a = p(s, t, "a");
                t.nll_from_logits(a, 2)
            },
        ),
        case(
            "mean_rows",
            vec![("a", vec![4, 3])],
            vec![1, 3],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.mean_rows(a)?;
                weighted(t, o, r)
            },
        ),
        case(
            "max_rows",
            vec![("a", vec![4, 3])],
            vec![1, 3],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.max_rows(a)?;
                weighted(t, o, r)
            },
        ),
        case(
            "concat_cols",
            vec![("a", vec![2, 2]), ("b", vec![2, 3])],
            vec![2, 5],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.concat_cols(&[a, b])?;
                weighted(t, o, r)
            },
        ),
        case(
            "concat_rows",
            vec![("a", vec![1, 3]), ("b", vec![2, 3])],
            vec![3, 3],
            |s, t, r| {
                let (a, b) = (p(s, t, "a"), p(s, t, "b"));
                let o = t.concat_rows(&[a, b])?;
                weighted(t, o, r)
            },
        ),
        case(
            "select_rows",
            vec![("a", vec![4, 2])],
            vec![3, 2],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.select_rows(a, &[3, 0, 3])?;
                weighted(t, o, r)
            },
        ),
        case("gather", vec![("a", vec![5, 2])], vec![3, 2], |s, t, r| {
            let o = t.gather(s, s.id("a").expect("registered"), &[4, 1, 4])?;
            weighted(t, o, r)
        }),
        case(
            "slice_cols",
            vec![("a", vec![2, 5])],
            vec![2, 2],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.slice_cols(a, 1, 3)?;
                weighted(t, o, r)
            },
        ),
        case("unfold", vec![("a", vec![5, 2])], vec![3, 6], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.unfold(a, 3)?;
            weighted(t, o, r)
        }),
        case(
            "unfold_padded",
            vec![("a", vec![2, 2])],
            vec![1, 6],
            |s, t, r| {
                let a = p(s, t, "a");
                let o = t.unfold(a, 3)?;
                weighted(t, o, r)
            },
        ),
        case("dropout", vec![("a", vec![3, 4])], vec![3, 4], |s, t, r| {
            let a = p(s, t, "a");
            let o = t.dropout(a, 0.5, true, &mut ChaCha8Rng::seed_from_u64(17))?;
            weighted(t, o, r)
        }),
        case(
            "lstm_sequence",
            vec![
                ("x", vec![4, 3]),
                ("wx", vec![3, 8]),
                ("wh", vec![2, 8]),
                ("b", vec![1, 8]),
            ],
            vec![4, 2],
            |s, t, r| {
                let (x, wx, wh, b) = (p(s, t, "x"), p(s, t, "wx"), p(s, t, "wh"), p(s, t, "b"));
                let o = t.lstm_sequence(x, wx, wh, b, false)?;
                weighted(t, o, r)
            },
        ),
        case(
            "lstm_sequence_reverse",
            vec![
                ("x", vec![4, 3]),
                ("wx", vec![3, 8]),
                ("wh", vec![2, 8]),
                ("b", vec![1, 8]),
            ],
            vec![4, 2],
            |s, t, r| {
                let (x, wx, wh, b) = (p(s, t, "x"), p(s, t, "wx"), p(s, t, "wh"), p(s, t, "b"));
                let o = t.lstm_sequence(x, wx, wh, b, true)?;
                weighted(t, o, r)
            },
        ),
        case(
            "lstm_step",
            vec![
                ("x", vec![1, 3]),
                ("h", vec![1, 2]),
                ("c", vec![1, 2]),
                ("wx", vec![3, 8]),
                ("wh", vec![2, 8]),
                ("b", vec![1, 8]),
            ],
            vec![1, 4],
            |s, t, r| {
                let (x, h, c) = (p(s, t, "x"), p(s, t, "h"), p(s, t, "c"));
                let (wx, wh, b) = (p(s, t, "wx"), p(s, t, "wh"), p(s, t, "b"));
                let (h2, c2) = lstm_step(t, x, (h, c), wx, wh, b)?;
                let o = t.concat_cols(&[h2, c2])?;
                weighted(t, o, r)
            },
        ),
    ]
}

/// Names of the operations covered by [`check_ops`].
pub fn op_names() -> Vec<&'static str> {
    op_cases().iter().map(|c| c.name).collect()
}

/// Checks every differentiable tape operation on `trials` random inputs.
/// One outcome per operation, holding its worst trial.
pub fn check_ops(seed: u64, trials: usize, cfg: &FdConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for case in op_cases() {
        let mut worst: Option<CheckOutcome> = None;
        for trial in 0..trials {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(trial as u64));
            let mut store = ParamStore::new(0.0);
            for (n, shape) in &case.params {
                store.add(n, away_from_zero(shape, &mut rng))?;
            }
            let r: Tensor<f64> = uniform(&case.out_shape, 1.0, &mut rng);
            let shift: f64 = rng.gen_range(-0.5..0.5);
            let r = r.map(|x| x + shift);
            let res = check_gradients(case.name, &mut store, |s, t| (case.loss)(s, t, &r), cfg)?;
            let rel = |o: &CheckOutcome| o.worst.as_ref().map_or(0.0, |w| w.rel_err);
            if worst.as_ref().map_or(true, |w| rel(&res) > rel(w)) {
                worst = Some(res);
            }
        }
        if let Some(w) = worst {
            out.push(w);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_a_few_trials() {
        let res = check_ops(3, 3, &FdConfig::default()).unwrap();
        assert_eq!(res.len(), op_names().len());
        for r in res {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_reported_with_its_coordinate() {
        let mut store = ParamStore::new(0.0);
        store.add("a", Tensor::row(vec![0.5, 2.0])).unwrap();
        let res = check_gradients(
            "fake",
            &mut store,
            |s, t| {
                let a = p(s, t, "a");
                let k = s.get(s.id("a").unwrap()).data()[1];
                // a[1] also enters through a constant the tape cannot see
                let c = t.constant(Tensor::row(vec![1.0, k]));
                let m = t.mul(a, c)?;
                Ok(t.sum(m))
            },
            &FdConfig::default(),
        )
        .unwrap();
        assert!(!res.passed);
        let w = res.worst.unwrap();
        assert_eq!((w.param.as_str(), w.coord), ("a", 1));
    }
}
