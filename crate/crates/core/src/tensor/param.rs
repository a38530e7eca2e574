use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Values of every parameter at one point in training.
pub type ParamSnapshot = Vec<Tensor>;

/// Owns all trainable parameters of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    /// Total number of scalar entries.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Scalar entries, not counting the listed parameters.
    pub fn count_excluding(&self, skip: &[ParamId]) -> usize {
        self.ids()
            .filter(|id| !skip.contains(id))
            .map(|id| self.value(id).len())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Clears the gradient of one parameter, e.g. to keep it fixed for a step.
    pub fn zero_grad_of(&mut self, id: ParamId) {
        self.params[id.0].grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn add_grad(&mut self, id: ParamId, delta: &[f64]) {
        let g = self.params[id.0].grad.data_mut();
        g.iter_mut().zip(delta).for_each(|(a, b)| *a += b);
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Restores values from a snapshot taken on this set (or a prefix of it).
    pub fn restore(&mut self, snapshot: &ParamSnapshot) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::invalid("snapshot parameter count differs"));
        }
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape("restore", p.value.shape(), v.shape()));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// All values concatenated in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Appends rows to a rank-2 parameter, leaving existing rows untouched.
    pub fn append_rows(&mut self, id: ParamId, rows: &[Vec<f64>]) -> Result<()> {
        let p = &mut self.params[id.0];
        let (r, c) = p.value.dims2("append_rows")?;
        let mut data = std::mem::take(&mut p.value).into_data();
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("append_rows", &[r, c], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        let total = r + rows.len();
        p.value = Tensor::matrix(total, c, data)?;
        let mut g = std::mem::take(&mut p.grad).into_data();
        g.resize(total * c, 0.0);
        p.grad = Tensor::matrix(total, c, g)?;
        Ok(())
    }
}

impl Default for Tensor {
    fn default() -> Self {
        Tensor::zeros(&[0])
    }
}

/// Uniform Glorot initialisation, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape, data).expect("shape product matches")
}
