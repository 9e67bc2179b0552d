//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding
//! its value and the ids of its inputs. Because a node can only refer to
//! nodes created before it, the node list is already in topological order
//! and [`Tape::backward`] walks it once in reverse.
//!
//! Parameters enter the tape either as full copies ([`Tape::param`]) or as
//! row gathers from an embedding table ([`Tape::gather`]); their gradients
//! come back keyed by [`ParamId`] in [`Gradients::params`].

use rand::Rng;

use super::optim::{ParamGrads, ParamId, ParamStore};
use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the forward output `y`.
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            // subgradient at 0 is 0
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Gather {
        param: ParamId,
        rows: Vec<usize>,
        table_shape: Vec<usize>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Unary(Var, Activation),
    Softmax(Var),
    NllLogits {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
    Sum(Var),
    MeanRows(Var),
    MaxRows {
        x: Var,
        argmax: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Unfold {
        x: Var,
        width: usize,
    },
    Mask {
        x: Var,
        mask: Vec<T>,
    },
    Lstm(Box<LstmRecord<T>>),
}

struct LstmRecord<T> {
    x: Var,
    wx: Var,
    wh: Var,
    b: Var,
    reverse: bool,
    hidden: usize,
    /// Per processing step: activated gates `[i f g o]`, cell state, tanh(cell).
    gates: Vec<T>,
    cells: Vec<T>,
    cells_tanh: Vec<T>,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward computation for later differentiation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape_of(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Input that gradients may flow into (read back with [`Gradients::wrt`]).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    /// Rows of a rank-2 parameter, e.g. embedding lookups.
    pub fn gather(&mut self, store: &ParamStore<T>, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = store.get(id);
        let (n, d) = (table.rows(), table.cols());
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(Error::dim(
                    "gather",
                    format!(
                        "row {} out of range for {} {:?}",
                        r,
                        store.name(id),
                        table.shape()
                    ),
                ));
            }
            data.extend_from_slice(table.row_slice(r));
        }
        let value = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(
            value,
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
                table_shape: table.shape().to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds the single row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape_of(a);
        let (br, bc) = self.shape_of(b);
        if br != 1 || bc != n {
            return Err(Error::dim(
                "add_row",
                format!(
                    "{:?} + row {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(a).clone().reshape(vec![m, n])?;
        for r in 0..m {
            for (o, &bv) in out.row_slice_mut(r).iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let value = self.value(a).map(|x| x * k);
        self.push(value, Op::Scale(a, k))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let value = self.value(a).map(|x| kind.apply(x));
        self.push(value, Op::Unary(a, kind))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::dim("softmax", "empty input"));
        }
        let mut out = t.clone();
        let rows = out.rows();
        for r in 0..rows {
            softmax_in_place(out.row_slice_mut(r));
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)` for a
    /// single row of logits.
    pub fn nll_from_logits(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 || target >= t.cols() {
            return Err(Error::dim(
                "nll_from_logits",
                format!("target {} for logits {:?}", target, t.shape()),
            ));
        }
        let row = t.data();
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        let loss = lse - row[target];
        let mut probs = row.to_vec();
        softmax_in_place(&mut probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::NllLogits {
                logits,
                target,
                probs,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape_of(a);
        if m == 0 {
            return Err(Error::Contract("mean over zero rows".into()));
        }
        let t = self.value(a);
        let inv = T::one() / T::lit(m as f64);
        let mut out = vec![T::zero(); n];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o *= inv;
        }
        Ok(self.push(Tensor::row(out), Op::MeanRows(a)))
    }

    /// Column-wise maximum over rows (max pooling over time).
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape_of(a);
        if m == 0 {
            return Err(Error::Contract("max over zero rows".into()));
        }
        let t = self.value(a);
        let mut out = t.row_slice(0).to_vec();
        let mut argmax = vec![0; n];
        for r in 1..m {
            for (c, &x) in t.row_slice(r).iter().enumerate() {
                if x > out[c] {
                    out[c] = x;
                    argmax[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::row(out), Op::MaxRows { x: a, argmax }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat_cols", "no inputs"));
        };
        let m = self.shape_of(first).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape_of(p).1).collect();
        if parts.iter().any(|&p| self.shape_of(p).0 != m) {
            let shapes: Vec<_> = parts
                .iter()
                .map(|&p| self.value(p).shape().to_vec())
                .collect();
            return Err(Error::dim(
                "concat_cols",
                format!("row counts differ: {shapes:?}"),
            ));
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat_rows", "no inputs"));
        };
        let n = self.shape_of(first).1;
        if parts.iter().any(|&p| self.shape_of(p).1 != n) {
            let shapes: Vec<_> = parts
                .iter()
                .map(|&p| self.value(p).shape().to_vec())
                .collect();
            return Err(Error::dim(
                "concat_rows",
                format!("column counts differ: {shapes:?}"),
            ));
        }
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            m += self.shape_of(p).0;
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Selects rows by index; repeats are allowed.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.shape_of(a);
        let t = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::dim("select_rows", format!("row {r} of {m}")));
            }
            data.extend_from_slice(t.row_slice(r));
        }
        let value = Tensor::matrix(rows.len(), n, data)?;
        Ok(self.push(
            value,
            Op::SelectRows {
                x: a,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.shape_of(a);
        if start >= end || end > n {
            return Err(Error::dim(
                "slice_cols",
                format!("{start}..{end} of {n} columns"),
            ));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let value = Tensor::matrix(m, end - start, data)?;
        Ok(self.push(value, Op::SliceCols { x: a, start }))
    }

    /// Sliding windows of `width` consecutive rows, each flattened into one
    /// row. Inputs shorter than `width` are zero-padded at the end.
    pub fn unfold(&mut self, a: Var, width: usize) -> Result<Var> {
        if width == 0 {
            return Err(Error::Contract("window width 0".into()));
        }
        let (m, n) = self.shape_of(a);
        let padded = m.max(width);
        let out_rows = padded - width + 1;
        let t = self.value(a);
        let mut data = vec![T::zero(); out_rows * width * n];
        for r in 0..out_rows {
            for k in 0..width {
                let src = r + k;
                if src < m {
                    let dst = (r * width + k) * n;
                    data[dst..dst + n].copy_from_slice(t.row_slice(src));
                }
            }
        }
        let value = Tensor::matrix(out_rows, width * n, data)?;
        Ok(self.push(value, Op::Unfold { x: a, width }))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Input(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).len())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let value = {
            let t = self.value(a);
            let data = t.data().iter().zip(&mask).map(|(&x, &k)| x * k).collect();
            Tensor::new(t.shape().to_vec(), data)?
        };
        Ok(self.push(value, Op::Mask { x: a, mask }))
    }

    /// Runs an LSTM over the rows of `x` (zero initial state) and returns the
    /// hidden state at every position. With `reverse`, positions are visited
    /// last to first but outputs stay aligned with their input rows.
    ///
    /// `wx`: `d_in x 4H`, `wh`: `H x 4H`, `b`: `1 x 4H`, gate order
    /// input, forget, cell candidate, output.
    pub fn lstm_sequence(
        &mut self,
        x: Var,
        wx: Var,
        wh: Var,
        b: Var,
        reverse: bool,
    ) -> Result<Var> {
        let (n, d_in) = self.shape_of(x);
        let (wr, four_h) = self.shape_of(wx);
        let hidden = four_h / 4;
        if wr != d_in
            || four_h % 4 != 0
            || self.shape_of(wh) != (hidden, four_h)
            || self.shape_of(b) != (1, four_h)
        {
            return Err(Error::dim(
                "lstm_sequence",
                format!(
                    "x {:?}, wx {:?}, wh {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(wx).shape(),
                    self.value(wh).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let mut xw = vec![T::zero(); n * four_h];
        matmul_into(
            self.value(x).data(),
            self.value(wx).data(),
            &mut xw,
            n,
            d_in,
            four_h,
        );
        let whv = self.value(wh).data();
        let bv = self.value(b).data();

        let mut out = vec![T::zero(); n * hidden];
        let mut gates = vec![T::zero(); n * four_h];
        let mut cells = vec![T::zero(); n * hidden];
        let mut cells_tanh = vec![T::zero(); n * hidden];
        let mut h = vec![T::zero(); hidden];
        let mut c = vec![T::zero(); hidden];
        let mut pre = vec![T::zero(); four_h];
        for s in 0..n {
            let t = if reverse { n - 1 - s } else { s };
            pre.copy_from_slice(&xw[t * four_h..(t + 1) * four_h]);
            for (p, &bb) in pre.iter_mut().zip(bv) {
                *p += bb;
            }
            matmul_into(&h, whv, &mut pre, 1, hidden, four_h);
            let g = &mut gates[s * four_h..(s + 1) * four_h];
            for j in 0..hidden {
                let ig = sigmoid(pre[j]);
                let fg = sigmoid(pre[hidden + j]);
                let cg = pre[2 * hidden + j].tanh();
                let og = sigmoid(pre[3 * hidden + j]);
                g[j] = ig;
                g[hidden + j] = fg;
                g[2 * hidden + j] = cg;
                g[3 * hidden + j] = og;
                c[j] = fg * c[j] + ig * cg;
                let tc = c[j].tanh();
                h[j] = og * tc;
                cells[s * hidden + j] = c[j];
                cells_tanh[s * hidden + j] = tc;
            }
            out[t * hidden..(t + 1) * hidden].copy_from_slice(&h);
        }
        let value = Tensor::matrix(n, hidden, out)?;
        Ok(self.push(
            value,
            Op::Lstm(Box::new(LstmRecord {
                x,
                wx,
                wh,
                b,
                reverse,
                hidden,
                gates,
                cells,
                cells_tanh,
            })),
        ))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), T::one()));
        let mut params = ParamGrads::new(0);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.accumulate(*id, &g),
                Op::Gather {
                    param,
                    rows,
                    table_shape,
                } => {
                    let slot = params.slot_mut(*param, table_shape);
                    for (k, &r) in rows.iter().enumerate() {
                        for (s, &gv) in slot.row_slice_mut(r).iter_mut().zip(g.row_slice(k)) {
                            *s += gv;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let ga = slot(&mut grads, *a, ta);
                    matmul_bt_into(g.data(), tb.data(), ga.data_mut(), m, n, k);
                    let gb = slot(&mut grads, *b, tb);
                    matmul_at_into(ta.data(), g.data(), gb.data_mut(), m, k, n);
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    add_flat(&mut grads, *a, self.value(*a), gt.data());
                }
                Op::Add(a, b) => {
                    add_flat(&mut grads, *a, self.value(*a), g.data());
                    add_flat(&mut grads, *b, self.value(*b), g.data());
                }
                Op::AddRow(a, b) => {
                    add_flat(&mut grads, *a, self.value(*a), g.data());
                    let tb = self.value(*b);
                    let gb = slot(&mut grads, *b, tb);
                    let n = tb.len();
                    for r in 0..g.rows() {
                        for (o, &x) in gb.data_mut().iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                            *o += x;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da: Vec<T> = g
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(&x, &y)| x * y)
                        .collect();
                    let db: Vec<T> = g
                        .data()
                        .iter()
                        .zip(ta.data())
                        .map(|(&x, &y)| x * y)
                        .collect();
                    add_flat(&mut grads, *a, ta, &da);
                    add_flat(&mut grads, *b, tb, &db);
                }
                Op::Scale(a, k) => {
                    let da: Vec<T> = g.data().iter().map(|&x| x * *k).collect();
                    add_flat(&mut grads, *a, self.value(*a), &da);
                }
                Op::Unary(a, kind) => {
                    let da: Vec<T> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gv, &y)| gv * kind.grad_from_output(y))
                        .collect();
                    add_flat(&mut grads, *a, self.value(*a), &da);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let n = y.cols();
                    let mut da = vec![T::zero(); y.len()];
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for c in 0..n {
                            da[r * n + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    add_flat(&mut grads, *a, self.value(*a), &da);
                }
                Op::NllLogits {
                    logits,
                    target,
                    probs,
                } => {
                    let s = g.data()[0];
                    let mut da: Vec<T> = probs.iter().map(|&p| p * s).collect();
                    da[*target] -= s;
                    add_flat(&mut grads, *logits, self.value(*logits), &da);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    let da = vec![g.data()[0]; ta.len()];
                    add_flat(&mut grads, *a, ta, &da);
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let (m, n) = (ta.rows(), ta.cols());
                    let inv = T::one() / T::lit(m as f64);
                    let ga = slot(&mut grads, *a, ta);
                    for r in 0..m {
                        for c in 0..n {
                            ga.data_mut()[r * n + c] += g.data()[c] * inv;
                        }
                    }
                }
                Op::MaxRows { x, argmax } => {
                    let tx = self.value(*x);
                    let n = tx.cols();
                    let gx = slot(&mut grads, *x, tx);
                    for (c, &r) in argmax.iter().enumerate() {
                        gx.data_mut()[r * n + c] += g.data()[c];
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let tp = self.value(p);
                        let w = tp.cols();
                        let gp = slot(&mut grads, p, tp);
                        for r in 0..tp.rows() {
                            let src = &g.data()[r * total + offset..r * total + offset + w];
                            for (o, &x) in gp.row_slice_mut(r).iter_mut().zip(src) {
                                *o += x;
                            }
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let tp = self.value(p);
                        let len = tp.len();
                        add_flat(&mut grads, p, tp, &g.data()[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::SelectRows { x, rows } => {
                    let tx = self.value(*x);
                    let gx = slot(&mut grads, *x, tx);
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, &v) in gx.row_slice_mut(r).iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let tx = self.value(*x);
                    let w = g.cols();
                    let gx = slot(&mut grads, *x, tx);
                    for r in 0..g.rows() {
                        let dst = &mut gx.row_slice_mut(r)[*start..*start + w];
                        for (o, &v) in dst.iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Unfold { x, width } => {
                    let tx = self.value(*x);
                    let (m, n) = (tx.rows(), tx.cols());
                    let gx = slot(&mut grads, *x, tx);
                    for r in 0..g.rows() {
                        let grow = g.row_slice(r);
                        for k in 0..*width {
                            let src = r + k;
                            if src < m {
                                let dst = gx.row_slice_mut(src);
                                for (o, &v) in dst.iter_mut().zip(&grow[k * n..(k + 1) * n]) {
                                    *o += v;
                                }
                            }
                        }
                    }
                }
                Op::Mask { x, mask } => {
                    let da: Vec<T> = g.data().iter().zip(mask).map(|(&a, &b)| a * b).collect();
                    add_flat(&mut grads, *x, self.value(*x), &da);
                }
                Op::Lstm(rec) => self.lstm_backward(rec, &node.value, &g, &mut grads),
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn lstm_backward(
        &self,
        rec: &LstmRecord<T>,
        out: &Tensor<T>,
        dout: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let h = rec.hidden;
        let four_h = 4 * h;
        let tx = self.value(rec.x);
        let (n, d_in) = (tx.rows(), tx.cols());
        let whv = self.value(rec.wh).data();
        let pos = |s: usize| if rec.reverse { n - 1 - s } else { s };

        let mut da_all = vec![T::zero(); n * four_h];
        let mut dwh = vec![T::zero(); h * four_h];
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        let one = T::one();
        for s in (0..n).rev() {
            let t = pos(s);
            let g = &rec.gates[s * four_h..(s + 1) * four_h];
            let tc = &rec.cells_tanh[s * h..(s + 1) * h];
            let da = &mut da_all[t * four_h..(t + 1) * four_h];
            for j in 0..h {
                let (ig, fg, cg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let c_prev = if s > 0 {
                    rec.cells[(s - 1) * h + j]
                } else {
                    T::zero()
                };
                let dh = dout.data()[t * h + j] + dh_next[j];
                let d_o = dh * tc[j];
                let dc = dh * og * (one - tc[j] * tc[j]) + dc_next[j];
                da[j] = dc * cg * ig * (one - ig);
                da[h + j] = dc * c_prev * fg * (one - fg);
                da[2 * h + j] = dc * ig * (one - cg * cg);
                da[3 * h + j] = d_o * og * (one - og);
                dc_next[j] = dc * fg;
            }
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            matmul_bt_into(da, whv, &mut dh_next, 1, four_h, h);
            if s > 0 {
                let hp = pos(s - 1);
                matmul_at_into(
                    &out.data()[hp * h..(hp + 1) * h],
                    da,
                    &mut dwh,
                    1,
                    h,
                    four_h,
                );
            }
        }

        let mut dwx = vec![T::zero(); d_in * four_h];
        matmul_at_into(tx.data(), &da_all, &mut dwx, n, d_in, four_h);
        let mut dx = vec![T::zero(); n * d_in];
        matmul_bt_into(&da_all, self.value(rec.wx).data(), &mut dx, n, four_h, d_in);
        let mut db = vec![T::zero(); four_h];
        for t in 0..n {
            for (o, &v) in db.iter_mut().zip(&da_all[t * four_h..(t + 1) * four_h]) {
                *o += v;
            }
        }
        add_flat(grads, rec.x, tx, &dx);
        add_flat(grads, rec.wx, self.value(rec.wx), &dwx);
        add_flat(grads, rec.wh, self.value(rec.wh), &dwh);
        add_flat(grads, rec.b, self.value(rec.b), &db);
    }
}

fn slot<'g, T: Scalar>(
    grads: &'g mut [Option<Tensor<T>>],
    v: Var,
    like: &Tensor<T>,
) -> &'g mut Tensor<T> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

fn add_flat<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, like: &Tensor<T>, delta: &[T]) {
    let s = slot(grads, v, like);
    for (o, &d) in s.data_mut().iter_mut().zip(delta) {
        *o += d;
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: ParamGrads<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to a node; `None` if the loss does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &ParamGrads<T> {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads<T> {
        self.params
    }
}

/// Softmax of a plain vector, outside any tape.
pub fn softmax<T: Scalar>(v: &Tensor<T>) -> Result<Tensor<T>> {
    if v.is_empty() {
        return Err(Error::dim("softmax", "empty input"));
    }
    let mut out = v.clone();
    let rows = out.rows();
    for r in 0..rows {
        softmax_in_place(out.row_slice_mut(r));
    }
    Ok(out)
}
