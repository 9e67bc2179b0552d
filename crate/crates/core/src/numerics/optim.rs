//! Named trainable parameters and the Adagrad update.

use std::collections::HashMap;

use rand::Rng;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Added to the accumulator root before dividing.
pub const ADAGRAD_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameters by name, each with its Adagrad accumulator.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    accum: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
    lr: T,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(lr: T) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            accum: Vec::new(),
            index: HashMap::new(),
            lr,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.accum.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a parameter drawn uniformly from `[-bound, bound]`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        self.add(name, uniform(shape, bound, rng))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn accumulator(&self, id: ParamId) -> &Tensor<T> {
        &self.accum[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    /// Replaces a parameter's value; the accumulator is kept.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(Error::dim(
                "param_set",
                format!(
                    "{} has shape {:?}, got {:?}",
                    self.names[id.0],
                    self.values[id.0].shape(),
                    value.shape()
                ),
            ));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::all_finite)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// `accum += g^2; param -= lr * g / (sqrt(accum) + eps)`.
    pub fn adagrad_step(&mut self, grads: &ParamGrads<T>) -> Result<()> {
        if grads.slots.len() > self.values.len() {
            return Err(Error::Contract(format!(
                "gradients for {} parameters, store has {}",
                grads.slots.len(),
                self.values.len()
            )));
        }
        for (i, g) in grads.slots.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != self.values[i].shape() {
                    return Err(Error::dim(
                        "adagrad_step",
                        format!(
                            "gradient {:?} for {} of shape {:?}",
                            g.shape(),
                            self.names[i],
                            self.values[i].shape()
                        ),
                    ));
                }
            }
        }
        let eps = T::lit(ADAGRAD_EPSILON);
        for (i, g) in grads.slots.iter().enumerate() {
            let Some(g) = g else { continue };
            let acc = self.accum[i].data_mut();
            let val = self.values[i].data_mut();
            for ((p, a), &gi) in val.iter_mut().zip(acc.iter_mut()).zip(g.data()) {
                *a += gi * gi;
                *p -= self.lr * gi / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Sparse-by-parameter gradient collection.
#[derive(Clone, Debug)]
pub struct ParamGrads<T> {
    slots: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn new(n_params: usize) -> Self {
        Self {
            slots: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) {
        if id.0 >= self.slots.len() {
            self.slots.resize(id.0 + 1, None);
        }
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub(crate) fn slot_mut(&mut self, id: ParamId, shape: &[usize]) -> &mut Tensor<T> {
        if id.0 >= self.slots.len() {
            self.slots.resize(id.0 + 1, None);
        }
        self.slots[id.0].get_or_insert_with(|| Tensor::zeros(shape))
    }

    pub fn merge(&mut self, other: &ParamGrads<T>) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for g in self.slots.iter_mut().flatten() {
            g.scale_in_place(k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().flatten().all(Tensor::all_finite)
    }
}

pub fn uniform<T: Scalar, R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(v: f64, lr: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new(lr);
        let id = s.add("w", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    fn grad(id: ParamId, g: f64) -> ParamGrads<f64> {
        let mut gs = ParamGrads::new(1);
        gs.accumulate(id, &Tensor::scalar(g));
        gs
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let (mut s, id) = store_with(0.0, 0.1);
        s.adagrad_step(&grad(id, 3.0)).unwrap();
        assert_eq!(s.accumulator(id).data(), &[9.0]);
        approx::assert_abs_diff_eq!(s.get(id).data()[0], -0.1, epsilon = 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut s, id) = store_with(0.7, 0.1);
        s.adagrad_step(&grad(id, 0.0)).unwrap();
        assert_eq!(s.get(id).data(), &[0.7]);
        assert_eq!(s.accumulator(id).data(), &[0.0]);
    }

    #[test]
    fn second_step_is_smaller() {
        let (mut s, id) = store_with(0.0, 0.1);
        s.adagrad_step(&grad(id, 1.0)).unwrap();
        let first = s.get(id).data()[0];
        assert_eq!(s.accumulator(id).data(), &[1.0]);
        s.adagrad_step(&grad(id, 1.0)).unwrap();
        let second = s.get(id).data()[0] - first;
        assert_eq!(s.accumulator(id).data(), &[2.0]);
        assert!(second.abs() < first.abs());
        approx::assert_abs_diff_eq!(second, -0.1 / 2f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut s, id) = store_with(0.0, 0.1);
        let mut gs = ParamGrads::new(1);
        gs.accumulate(id, &Tensor::zeros(&[2, 2]));
        assert!(matches!(s.adagrad_step(&gs), Err(Error::Dimension { .. })));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let (mut s, _) = store_with(0.0, 0.1);
        assert!(s.add("w", Tensor::scalar(1.0)).is_err());
    }
}
