use rand::Rng;

use super::{ParamId, ParamStore, Scalar, Tape, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    /// `d_in x 4H`
    pub wx: ParamId,
    /// `H x 4H`
    pub wh: ParamId,
    /// `1 x 4H`
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            wx: store.add_uniform(&format!("{prefix}.wx"), &[d_in, 4 * hidden], bound, rng)?,
            wh: store.add_uniform(&format!("{prefix}.wh"), &[hidden, 4 * hidden], bound, rng)?,
            b: store.add_uniform(&format!("{prefix}.b"), &[1, 4 * hidden], bound, rng)?,
            hidden,
        })
    }

    /// Looks the three weights up under `prefix`.
    pub fn lookup<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let get = |suffix: &str| {
            store
                .id(&format!("{prefix}.{suffix}"))
                .ok_or_else(|| Error::Contract(format!("missing parameter {prefix}.{suffix}")))
        };
        let wh = get("wh")?;
        Ok(Self {
            wx: get("wx")?,
            b: get("b")?,
            hidden: store.get(wh).rows(),
            wh,
        })
    }

    pub fn input_dim<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.wx).rows()
    }
}

/// One LSTM cell update built from primitive tape operations.
///
/// `x`: `1 x d_in`, `h`/`c`: `1 x H`. Returns `(h', c')`.
pub fn lstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    (h, c): (Var, Var),
    wx: Var,
    wh: Var,
    b: Var,
) -> Result<(Var, Var)> {
    let hidden = tape.value(wh).rows();
    let xw = tape.matmul(x, wx)?;
    let hw = tape.matmul(h, wh)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add_row(pre, b)?;
    let gate = |tape: &mut Tape<T>, k: usize| tape.slice_cols(pre, k * hidden, (k + 1) * hidden);
    let i_pre = gate(tape, 0)?;
    let f_pre = gate(tape, 1)?;
    let g_pre = gate(tape, 2)?;
    let o_pre = gate(tape, 3)?;
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);
    let kept = tape.mul(f, c)?;
    let written = tape.mul(i, g)?;
    let c_next = tape.add(kept, written)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_fixpoint() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 3]));
        let h = tape.leaf(Tensor::zeros(&[1, 2]));
        let c = tape.leaf(Tensor::zeros(&[1, 2]));
        let wx = tape.leaf(Tensor::zeros(&[3, 8]));
        let wh = tape.leaf(Tensor::zeros(&[2, 8]));
        let b = tape.leaf(Tensor::zeros(&[1, 8]));
        let (h1, c1) = lstm_step(&mut tape, x, (h, c), wx, wh, b).unwrap();
        assert_eq!(tape.value(h1).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(c1).data(), &[0.0, 0.0]);
    }

    #[test]
    fn fused_sequence_matches_stepwise_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new(0.01);
        let p = LstmParams::register(&mut store, "l", 3, 2, 0.5, &mut rng).unwrap();
        let xs = crate::numerics::optim::uniform::<f64, _>(&[4, 3], 1.0, &mut rng);
        for reverse in [false, true] {
            let mut tape = Tape::new();
            let x = tape.leaf(xs.clone());
            let (wx, wh, b) = (
                tape.param(&store, p.wx),
                tape.param(&store, p.wh),
                tape.param(&store, p.b),
            );
            let fused = tape.lstm_sequence(x, wx, wh, b, reverse).unwrap();
            let mut h = tape.leaf(Tensor::zeros(&[1, 2]));
            let mut c = tape.leaf(Tensor::zeros(&[1, 2]));
            let order: Vec<usize> = if reverse {
                (0..4).rev().collect()
            } else {
                (0..4).collect()
            };
            for t in order {
                let xt = tape.select_rows(x, &[t]).unwrap();
                (h, c) = lstm_step(&mut tape, xt, (h, c), wx, wh, b).unwrap();
                let row = tape.value(fused).row_slice(t).to_vec();
                for (a, e) in tape.value(h).data().iter().zip(row) {
                    approx::assert_abs_diff_eq!(*a, e, epsilon = 1e-14);
                }
            }
        }
    }
}
