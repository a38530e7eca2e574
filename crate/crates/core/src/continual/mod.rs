//! Training over graph streams: elastic weight consolidation plus the
//! fine-tune, experience-replay and retrain-from-scratch reference strategies.

mod replay;
mod runner;

pub use replay::ReplayBuffer;
pub use runner::{
    node_roles, run_stream, run_streams, write_stream_records, ContinualConfig, Role, Strategy, StreamRecord,
};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::tasks::{node_loss, GraphInput, TaskModel};
use crate::tensor::{ParamSet, ParamSnapshot, Tape, Tensor, Var};

pub const DEFAULT_LAMBDA: f64 = 1e5;
pub const DEFAULT_U_SIZE: usize = 25;

/// Everything carried from one timestamp to the next.
///
/// Holds exactly one parameter snapshot and one importance vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EwcState {
    /// `Θ_{t-1}`, one tensor per parameter that existed then.
    pub prev: ParamSnapshot,
    /// `Ω`, shaped like `prev`, elementwise nonnegative.
    pub omega: Vec<Tensor>,
    pub lambda: f64,
    /// Sampled training nodes used for importance.
    pub u: Vec<String>,
}

impl EwcState {
    pub fn new(prev: ParamSnapshot, omega: Vec<Tensor>, lambda: f64, u: Vec<String>) -> Result<Self> {
        if prev.len() != omega.len() {
            return Err(Error::invalid(format!(
                "{} snapshots but {} importance tensors",
                prev.len(),
                omega.len()
            )));
        }
        for (p, o) in prev.iter().zip(&omega) {
            if p.shape() != o.shape() {
                return Err(Error::shape("ewc state", p.shape(), o.shape()));
            }
            if o.data().iter().any(|&w| w.is_nan() || w < 0.0) {
                return Err(Error::invalid("importance must be nonnegative"));
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("bad penalty strength {lambda}")));
        }
        Ok(EwcState { prev, omega, lambda, u })
    }

    /// Number of stored tensors: one snapshot and one importance per parameter.
    pub fn stored_tensors(&self) -> usize {
        self.prev.len() + self.omega.len()
    }

    /// `Σ_w λ/2 · Ω_w · (Θ_w − Θ_{t−1,w})²` over the entries that existed at `t − 1`.
    ///
    /// Embedding rows appended since then are not penalised.
    pub fn penalty(&self, tape: &mut Tape, params: &ParamSet) -> Result<Var> {
        let mut total = tape.constant(Tensor::scalar(0.0));
        for (id, (prev, omega)) in params.ids().zip(self.prev.iter().zip(&self.omega)) {
            let cur = params.value(id).shape().to_vec();
            let mut v = tape.param(params, id);
            if cur != prev.shape() {
                let grown =
                    cur.len() == 2 && prev.rank() == 2 && cur[1] == prev.shape()[1] && cur[0] >= prev.shape()[0];
                if !grown {
                    return Err(Error::shape("ewc penalty", &cur, prev.shape()));
                }
                v = tape.gather_rows(v, (0..prev.shape()[0]).collect::<Vec<_>>())?;
            }
            if prev.is_empty() {
                continue;
            }
            let old = tape.constant(prev.clone());
            let diff = tape.sub(v, old)?;
            let sq = tape.square(diff);
            let w = tape.constant(omega.clone());
            let weighted = tape.mul(sq, w)?;
            let s = tape.sum(weighted);
            total = tape.add(total, s)?;
        }
        if params.len() < self.prev.len() {
            return Err(Error::invalid("parameters disappeared since the snapshot"));
        }
        Ok(tape.scale(total, self.lambda / 2.0))
    }
}

/// `Ω = mean over nodes of (∂L(v)/∂Θ)²`, one tensor per parameter.
///
/// One forward pass, then one backward pass per node. An empty node set gives
/// all-zero importance.
pub fn compute_importance(
    model: &TaskModel,
    input: &GraphInput,
    nodes: &[usize],
    exec: Execution,
) -> Result<Vec<Tensor>> {
    if nodes.is_empty() {
        log::warn!("no unaffected nodes for importance; consolidation is off for this step");
        return mean_squared_grads(&Tape::new(), &[], &model.params, exec);
    }
    let mut tape = Tape::new();
    let logits = model.logits(&mut tape, input, None)?;
    let losses = nodes
        .iter()
        .map(|&v| node_loss(&mut tape, logits, &input.alt, &[v]))
        .collect::<Result<Vec<_>>>()?;
    mean_squared_grads(&tape, &losses, &model.params, exec)
}

/// Mean over `losses` of the squared parameter gradients of each.
///
/// Backward passes run through `exec` and are summed in input order.
pub fn mean_squared_grads(tape: &Tape, losses: &[Var], params: &ParamSet, exec: Execution) -> Result<Vec<Tensor>> {
    let mut omega: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    if losses.is_empty() {
        return Ok(omega);
    }
    let per_loss = exec.map(losses, |&l| -> Result<Vec<Option<Tensor>>> {
        let grads = tape.backward(l)?;
        Ok(tape.param_grads(&grads, params.len()))
    });
    for g in per_loss {
        for (acc, g) in omega.iter_mut().zip(g?) {
            if let Some(g) = g {
                acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b * b);
            }
        }
    }
    let n = losses.len() as f64;
    omega
        .iter_mut()
        .for_each(|o| o.data_mut().iter_mut().for_each(|x| *x /= n));
    Ok(omega)
}

/// Task loss on `affected` plus the consolidation penalty.
pub fn continual_loss(
    tape: &mut Tape,
    model: &TaskModel,
    input: &GraphInput,
    affected: &[usize],
    ewc: &EwcState,
) -> Result<Var> {
    let logits = model.logits(tape, input, None)?;
    let task = node_loss(tape, logits, &input.alt, affected)?;
    let pen = ewc.penalty(tape, &model.params)?;
    tape.add(task, pen)
}

/// `size` distinct entries of `train`, uniform without replacement, in input order.
pub fn sample_u(train: &[String], size: usize, seed: u64) -> Result<Vec<String>> {
    if size > train.len() {
        return Err(Error::invalid(format!(
            "asked for {size} of {} training nodes",
            train.len()
        )));
    }
    let mut picked = index::sample(&mut crate::rng_for(seed, "ewc-u"), train.len(), size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| train[i].clone()).collect())
}
