//! Define-by-run reverse-mode autodiff.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends a node
//! holding its value and the [`Op`] that produced it; nodes are therefore in
//! topological order by construction and [`Tape::backward`] is a single
//! reverse sweep. Gradients of shared inputs accumulate additively.

use std::sync::Arc;

use super::kernels::{self, sigmoid, softmax_row, softplus};
use super::param::{ParamId, ParamSet};
use super::Tensor;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A partition of `[0, len)` into groups for segment-wise reductions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    groups: Vec<Vec<usize>>,
    len: usize,
}

impl Segments {
    /// Validates that `groups` partition `[0, len)`. Empty groups are allowed.
    pub fn new(groups: Vec<Vec<usize>>, len: usize) -> Result<Self> {
        let mut seen = vec![false; len];
        for &i in groups.iter().flatten() {
            if i >= len || seen[i] {
                return Err(Error::invalid(format!(
                    "segments do not partition [0, {len}): index {i}"
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "segments do not cover index {missing} of [0, {len})"
            )));
        }
        Ok(Segments { groups, len })
    }

    /// Groups positions by `ids[i]`, producing `count` segments.
    pub fn from_ids(ids: &[usize], count: usize) -> Result<Self> {
        let mut groups = vec![Vec::new(); count];
        for (i, &id) in ids.iter().enumerate() {
            if id >= count {
                return Err(Error::invalid(format!("segment id {id} >= {count}")));
            }
            groups[id].push(i);
        }
        Ok(Segments { groups, len: ids.len() })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    LeakyRelu(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    RowScale(Var, Var),
    RowDot(Var, Var),
    SegmentSoftmax(Var, Arc<Segments>),
    CrossEntropy(Var, Arc<[usize]>),
    BceWithLogits(Var, Arc<[f64]>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, or `None` when `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    exec: Execution,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_execution(exec: Execution) -> Self {
        Tape {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients (free input).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Places a trainable parameter on the tape.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let data = kernels::matmul(self.exec, self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMul(a, b), rg))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|x| c * x);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// Adds a bias row (`[n]` or `[1, n]`) to every row of `a[m×n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2("add_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::shape("add_bias", self.shape(a), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (x, &bv) in row.iter_mut().zip(b) {
                *x += bv;
            }
        }
        let rg = self.rg(&[a, bias]);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::AddBias(a, bias), rg))
    }

    /// Concatenates along `axis`.
    ///
    /// Parts with no elements are dropped, unless every part is empty, in which
    /// case all are kept so that `[0, a] ∥ [0, b]` is `[0, a + b]`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let mut kept: Vec<Var> = parts.iter().copied().filter(|&p| !self.value(p).is_empty()).collect();
        if kept.is_empty() {
            kept = parts.to_vec();
        }
        let Some(&first) = kept.first() else {
            return Err(Error::invalid("concat of zero parts"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &p in &kept {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for &p in &kept {
            let width = self.shape(p)[axis] * inner;
            let src = self.value(p).data();
            for o in 0..outer {
                let dst = o * total * inner + offset;
                data[dst..dst + width].copy_from_slice(&src[o * width..(o + 1) * width]);
            }
            offset += width;
        }
        let rg = self.rg(&kept);
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat { parts: kept, axis }, rg))
    }

    /// `x` for `x ≥ 0`, `slope·x` otherwise.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let t = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        let rg = self.rg(&[a]);
        self.push(t, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(t, Op::Square(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::invalid("mean of empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), rg))
    }

    /// Selects rows `index` of `a` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: impl Into<Arc<[usize]>>) -> Result<Var> {
        let index = index.into();
        let t = self.value(a);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::invalid(format!("gather_rows index {i} >= {rows}")));
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(index.len(), cols, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GatherRows(a, index), rg))
    }

    /// `out[index[i]] += a[i]` into an `rows`-row matrix. Rows nobody targets stay zero.
    pub fn scatter_add_rows(&mut self, a: Var, index: impl Into<Arc<[usize]>>, rows: usize) -> Result<Var> {
        let index = index.into();
        let t = self.value(a);
        if t.rows() != index.len() {
            return Err(Error::shape("scatter_add_rows", t.shape(), &[index.len()]));
        }
        let cols = t.cols();
        let mut data = vec![0.0; rows * cols];
        for (r, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(Error::invalid(format!("scatter index {dst} >= {rows}")));
            }
            for (o, &x) in data[dst * cols..(dst + 1) * cols].iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::ScatterAddRows(a, index), rg))
    }

    /// Multiplies row `i` of `a[m×k]` by `s[i]` (`s` is `[m]` or `[m, 1]`).
    pub fn row_scale(&mut self, a: Var, s: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("row_scale")?;
        if self.value(s).len() != m {
            return Err(Error::shape("row_scale", self.shape(a), self.shape(s)));
        }
        let sv = self.value(s).data();
        let mut data = self.value(a).data().to_vec();
        if k > 0 {
            for (row, &c) in data.chunks_mut(k).zip(sv) {
                row.iter_mut().for_each(|x| *x *= c);
            }
        }
        let rg = self.rg(&[a, s]);
        Ok(self.push(Tensor::matrix(m, k, data)?, Op::RowScale(a, s), rg))
    }

    /// Per-row dot product of two `m×k` matrices, giving `[m, 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, _) = self.value(a).dims2("row_dot")?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("row_dot", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = (0..m)
            .map(|i| ta.row(i).iter().zip(tb.row(i)).map(|(x, y)| x * y).sum())
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, 1, data)?, Op::RowDot(a, b), rg))
    }

    /// Softmax within each segment of a score vector (`[n]` or `[n, 1]`).
    ///
    /// Scores are shifted by their segment maximum; empty segments produce nothing.
    pub fn segment_softmax(&mut self, scores: Var, segments: Arc<Segments>) -> Result<Var> {
        let t = self.value(scores);
        if t.len() != segments.len() || t.cols() != 1 {
            return Err(Error::shape("segment_softmax", t.shape(), &[segments.len()]));
        }
        let x = t.data();
        let mut out = vec![0.0; x.len()];
        for group in segments.groups() {
            if group.is_empty() {
                continue;
            }
            let max = group.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &i in group {
                out[i] = (x[i] - max).exp();
                total += out[i];
            }
            for &i in group {
                out[i] /= total;
            }
        }
        let out = Tensor::new(t.shape(), out)?;
        let rg = self.rg(&[scores]);
        Ok(self.push(out, Op::SegmentSoftmax(scores, segments), rg))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits[n×C]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: impl Into<Arc<[usize]>>) -> Result<Var> {
        let labels = labels.into();
        let (n, c) = self.value(logits).dims2("cross_entropy")?;
        if n != labels.len() {
            return Err(Error::shape("cross_entropy", self.shape(logits), &[labels.len()]));
        }
        if n == 0 {
            return Err(Error::invalid("cross_entropy over zero rows"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { label: bad, classes: c });
        }
        let t = self.value(logits);
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = t.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss / n as f64), Op::CrossEntropy(logits, labels), rg))
    }

    /// Mean binary cross-entropy on raw scores, in log-sum-exp form.
    pub fn bce_with_logits(&mut self, scores: Var, targets: impl Into<Arc<[f64]>>) -> Result<Var> {
        let targets = targets.into();
        let s = self.value(scores);
        if s.len() != targets.len() {
            return Err(Error::shape("bce_with_logits", s.shape(), &[targets.len()]));
        }
        if s.is_empty() {
            return Err(Error::invalid("bce_with_logits over zero scores"));
        }
        let loss: f64 = s
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| softplus(x) - x * y)
            .sum();
        let n = s.len() as f64;
        let rg = self.rg(&[scores]);
        Ok(self.push(Tensor::scalar(loss / n), Op::BceWithLogits(scores, targets), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradient for `v`, zero-filled when `v` did not influence the loss.
    pub fn gradient(&self, grads: &Gradients, v: Var) -> Tensor {
        grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(self.shape(v)))
    }

    /// Adds every parameter leaf's gradient into `params`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParamSet) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads.grads[i].as_ref() {
                    params.add_grad(id, g.data());
                }
            }
        }
    }

    /// Per-parameter gradients summed over every leaf of that parameter.
    ///
    /// Entry `i` belongs to `ParamId(i)`; `None` means the parameter did not
    /// influence the loss. `count` is the size of the owning [`ParamSet`].
    pub fn param_grads(&self, grads: &Gradients, count: usize) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; count];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                let Some(g) = grads.grads[i].as_ref() else { continue };
                match &mut out[id.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        out
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.data_mut().iter_mut().zip(delta.data()).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let exec = self.exec;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2("matmul")?;
                let n = tb.cols();
                if self.requires_grad(*a) {
                    let da = kernels::matmul_nt(exec, g.data(), tb.data(), m, n, k);
                    self.acc(grads, *a, Tensor::matrix(m, k, da)?);
                }
                if self.requires_grad(*b) {
                    let db = kernels::matmul_tn(exec, ta.data(), g.data(), m, k, n);
                    self.acc(grads, *b, Tensor::matrix(k, n, db)?);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = zip(g, tb, |x, y| x * y);
                let db = zip(g, ta, |x, y| x * y);
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::Scale(a, c) => self.acc(grads, *a, g.map(|x| c * x)),
            Op::AddBias(a, b) => {
                self.acc(grads, *a, g.clone());
                let tb = self.value(*b);
                let n = tb.len();
                let mut db = vec![0.0; n];
                if n > 0 {
                    for row in g.data().chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                }
                self.acc(grads, *b, Tensor::new(tb.shape(), db)?);
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let total = shape[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut offset = 0;
                for &p in parts {
                    let ps = self.shape(p);
                    let width = ps[*axis] * inner;
                    if self.requires_grad(p) {
                        let mut d = Vec::with_capacity(outer * width);
                        for o in 0..outer {
                            let src = o * total * inner + offset;
                            d.extend_from_slice(&g.data()[src..src + width]);
                        }
                        self.acc(grads, p, Tensor::new(ps, d)?);
                    }
                    offset += width;
                }
            }
            Op::LeakyRelu(a, slope) => {
                let d = zip(g, self.value(*a), |gx, x| if x >= 0.0 { gx } else { slope * gx });
                self.acc(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = zip(g, self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 });
                self.acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = zip(g, &node.value, |gx, y| gx * y * (1.0 - y));
                self.acc(grads, *a, d);
            }
            Op::Square(a) => {
                let d = zip(g, self.value(*a), |gx, x| 2.0 * x * gx);
                self.acc(grads, *a, d);
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                self.acc(grads, *a, Tensor::full(ta.shape(), g.item()));
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                self.acc(grads, *a, Tensor::full(ta.shape(), g.item() / ta.len() as f64));
            }
            Op::GatherRows(a, index) => {
                let ta = self.value(*a);
                let cols = ta.cols();
                let mut d = vec![0.0; ta.len()];
                for (r, &src) in index.iter().enumerate() {
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    d[src * cols..(src + 1) * cols]
                        .iter_mut()
                        .zip(gr)
                        .for_each(|(x, y)| *x += y);
                }
                self.acc(grads, *a, Tensor::new(ta.shape(), d)?);
            }
            Op::ScatterAddRows(a, index) => {
                let ta = self.value(*a);
                let cols = ta.cols();
                let mut d = Vec::with_capacity(ta.len());
                for &dst in index.iter() {
                    d.extend_from_slice(&g.data()[dst * cols..(dst + 1) * cols]);
                }
                self.acc(grads, *a, Tensor::new(ta.shape(), d)?);
            }
            Op::RowScale(a, s) => {
                let (ta, ts) = (self.value(*a), self.value(*s));
                let k = ta.cols();
                if self.requires_grad(*a) {
                    let mut d = g.data().to_vec();
                    if k > 0 {
                        for (row, &c) in d.chunks_mut(k).zip(ts.data()) {
                            row.iter_mut().for_each(|x| *x *= c);
                        }
                    }
                    self.acc(grads, *a, Tensor::new(ta.shape(), d)?);
                }
                if self.requires_grad(*s) {
                    let ds = (0..ts.len())
                        .map(|i| {
                            g.data()[i * k..(i + 1) * k]
                                .iter()
                                .zip(ta.row(i))
                                .map(|(x, y)| x * y)
                                .sum()
                        })
                        .collect();
                    self.acc(grads, *s, Tensor::new(ts.shape(), ds)?);
                }
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let k = ta.cols();
                let scale_rows = |t: &Tensor| {
                    let mut d = t.data().to_vec();
                    if k > 0 {
                        for (row, &c) in d.chunks_mut(k).zip(g.data()) {
                            row.iter_mut().for_each(|x| *x *= c);
                        }
                    }
                    d
                };
                let da = Tensor::new(ta.shape(), scale_rows(tb))?;
                let db = Tensor::new(tb.shape(), scale_rows(ta))?;
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::SegmentSoftmax(s, segments) => {
                let y = node.value.data();
                let gy = g.data();
                let mut d = vec![0.0; y.len()];
                for group in segments.groups() {
                    let dot: f64 = group.iter().map(|&i| y[i] * gy[i]).sum();
                    for &i in group {
                        d[i] = y[i] * (gy[i] - dot);
                    }
                }
                self.acc(grads, *s, Tensor::new(self.shape(*s), d)?);
            }
            Op::CrossEntropy(logits, labels) => {
                let t = self.value(*logits);
                let (n, c) = t.dims2("cross_entropy")?;
                let scale = g.item() / n as f64;
                let mut d = vec![0.0; n * c];
                for (i, &label) in labels.iter().enumerate() {
                    let out = &mut d[i * c..(i + 1) * c];
                    softmax_row(t.row(i), out);
                    out[label] -= 1.0;
                    out.iter_mut().for_each(|x| *x *= scale);
                }
                self.acc(grads, *logits, Tensor::new(t.shape(), d)?);
            }
            Op::BceWithLogits(s, targets) => {
                let t = self.value(*s);
                let scale = g.item() / t.len() as f64;
                let d = t
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&x, &y)| (sigmoid(x) - y) * scale)
                    .collect();
                self.acc(grads, *s, Tensor::new(t.shape(), d)?);
            }
        }
        Ok(())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("zip of equal shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::from_rows(&[vec![1., 0.], vec![0., 1.]]).unwrap());
        let b = t.constant(Tensor::from_rows(&[vec![3., 4.], vec![5., 6.]]).unwrap());
        let c = t.matmul(i, b).unwrap();
        assert_eq!(t.value(c).data(), &[3., 4., 5., 6.]);

        let x = t.constant(Tensor::matrix(1, 1, vec![2.]).unwrap());
        let y = t.constant(Tensor::matrix(1, 1, vec![3.]).unwrap());
        let z = t.matmul(x, y).unwrap();
        assert_eq!(t.value(z).data(), &[6.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn concat_vectors_and_empty() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1., 2.]));
        let b = t.constant(Tensor::vector(vec![3.]));
        let c = t.concat(&[a, b], 0).unwrap();
        assert_eq!(t.value(c).data(), &[1., 2., 3.]);
        let e = t.constant(Tensor::vector(vec![]));
        let d = t.concat(&[a, e], 0).unwrap();
        assert_eq!(t.value(d), t.value(a));
        let z1 = t.constant(Tensor::zeros(&[0, 2]));
        let z2 = t.constant(Tensor::zeros(&[0, 3]));
        let z = t.concat(&[z1, z2], 1).unwrap();
        assert_eq!(t.shape(z), &[0, 5]);
    }

    #[test]
    fn concat_mismatched_rows_fails() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[3, 3]));
        assert!(t.concat(&[a, b], 1).is_err());
    }

    #[test]
    fn concat_gradient_of_sum_is_ones() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap());
        let b = t.variable(Tensor::from_rows(&[vec![5.], vec![6.]]).unwrap());
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).data(), &[1., 2., 5., 3., 4., 6.]);
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        assert!(t.gradient(&g, a).data().iter().all(|&x| x == 1.0));
        assert!(t.gradient(&g, b).data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn leaky_relu_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-2., 3., 0.]));
        let y = t.leaky_relu(x, 0.2);
        let v = t.value(y).data();
        assert!(close(v[0], -0.4, 1e-15));
        assert_eq!(v[1], 3.0);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn leaky_relu_subgradient_at_zero_is_positive_branch() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::vector(vec![0.0]));
        let y = t.leaky_relu(x, 0.2);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(t.gradient(&g, x).data(), &[1.0]);
    }

    #[test]
    fn segment_softmax_examples() {
        let mut t = Tape::new();
        let s = t.constant(Tensor::vector(vec![0., 0., 0., 5., 1., 2.]));
        let seg = Arc::new(Segments::new(vec![vec![0, 1, 2], vec![3], vec![4, 5], vec![]], 6).unwrap());
        let y = t.segment_softmax(s, seg).unwrap();
        let v = t.value(y).data();
        for &x in &v[..3] {
            assert!(close(x, 1.0 / 3.0, 1e-15));
        }
        assert_eq!(v[3], 1.0);
        let e = std::f64::consts::E;
        assert!(close(v[4], e / (e + e * e), 1e-12));
        assert!(close(v[5], e * e / (e + e * e), 1e-12));
        assert!(close(v[4], 0.2689, 1e-4) && close(v[5], 0.7311, 1e-4));
    }

    #[test]
    fn segment_softmax_large_scores_do_not_overflow() {
        let mut t = Tape::new();
        let s = t.constant(Tensor::vector(vec![1000., 1001.]));
        let seg = Arc::new(Segments::from_ids(&[0, 0], 1).unwrap());
        let y = t.segment_softmax(s, seg).unwrap();
        assert!(t.value(y).all_finite());
    }

    #[test]
    fn segments_reject_non_partitions() {
        assert!(Segments::new(vec![vec![0, 1], vec![1]], 2).is_err());
        assert!(Segments::new(vec![vec![0]], 2).is_err());
        assert!(Segments::new(vec![vec![0, 2]], 2).is_err());
    }

    #[test]
    fn cross_entropy_uniform_and_margin() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::zeros(&[3, 4]));
        let ce = t.cross_entropy(l, vec![0, 1, 3]).unwrap();
        assert!(close(t.value(ce).item(), 4f64.ln(), 1e-12));
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 100.0] {
            let l = t.constant(Tensor::from_rows(&[vec![margin, 0., 0.]]).unwrap());
            let ce = t.cross_entropy(l, vec![0]).unwrap();
            let v = t.value(ce).item();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-40);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            t.cross_entropy(l, vec![3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn bce_examples() {
        let mut t = Tape::new();
        let s = t.constant(Tensor::vector(vec![0.0]));
        let l = t.bce_with_logits(s, vec![1.0]).unwrap();
        assert!(close(t.value(l).item(), 2f64.ln(), 1e-15));
        let s = t.constant(Tensor::vector(vec![20.0]));
        let l = t.bce_with_logits(s, vec![1.0]).unwrap();
        assert!(t.value(l).item() < 1e-8);
        let s = t.constant(Tensor::vector(vec![-1000.0, 1000.0]));
        let l = t.bce_with_logits(s, vec![1.0, 0.0]).unwrap();
        assert!(close(t.value(l).item(), 1000.0, 1e-9));
    }

    #[test]
    fn unused_inputs_get_zero_gradient() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![1., 2.]));
        let b = t.variable(Tensor::vector(vec![3., 4.]));
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert!(g.get(b).is_none());
        assert_eq!(t.gradient(&g, b).data(), &[0., 0.]);
    }

    #[test]
    fn shared_inputs_accumulate() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![3.]));
        let b = t.mul(a, a).unwrap();
        let c = t.add(b, a).unwrap();
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        assert_eq!(t.gradient(&g, a).data(), &[7.]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let a = t.variable(Tensor::vector(vec![1., 2.]));
        assert!(matches!(t.backward(a), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn scatter_leaves_untargeted_rows_zero() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap());
        let s = t.scatter_add_rows(a, vec![2, 2], 4).unwrap();
        assert_eq!(t.value(s).data(), &[0., 0., 0., 0., 4., 6., 0., 0.]);
    }
}
