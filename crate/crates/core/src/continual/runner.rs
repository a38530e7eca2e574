use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use super::{compute_importance, sample_u, EwcState, ReplayBuffer, DEFAULT_LAMBDA, DEFAULT_U_SIZE};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{apply_delta, AllotropicGraph, HeteroGraph, StreamDelta};
use crate::model::GrafenneConfig;
use crate::tasks::{
    evaluate_accuracy, train_node_classifier, EncoderKind, GraphInput, NodeSplit, TaskModel, TrainConfig,
};
use crate::tensor::{Adam, AdamConfig, ParamSnapshot, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Ewc,
    Ft,
    Er,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Oracle, Strategy::Ewc, Strategy::Ft, Strategy::Er];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Ewc => "ewc",
            Strategy::Ft => "ft",
            Strategy::Er => "er",
            Strategy::Oracle => "oracle",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ewc" => Ok(Strategy::Ewc),
            "ft" => Ok(Strategy::Ft),
            "er" => Ok(Strategy::Er),
            "oracle" => Ok(Strategy::Oracle),
            _ => Err(Error::invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinualConfig {
    pub lambda: f64,
    pub u_size: usize,
    /// Replay capacity; `None` means `u_size`.
    pub buffer: Option<usize>,
    /// Update steps per timestamp for the incremental strategies.
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            lambda: DEFAULT_LAMBDA,
            u_size: DEFAULT_U_SIZE,
            buffer: None,
            epochs: 100,
            lr: 1e-3,
        }
    }
}

impl ContinualConfig {
    pub fn buffer_capacity(&self) -> usize {
        self.buffer.unwrap_or(self.u_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("bad penalty strength {}", self.lambda)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// Which part of the split a labelled node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    Test,
    Unused,
}

/// Drawn per node id, so nodes keep their role for the whole stream and
/// nodes that arrive later are assigned the same way.
fn role_of(id: &str, fractions: (f64, f64, f64), seed: u64) -> Role {
    let u: f64 = crate::rng_for(seed, &format!("role/{id}")).gen();
    let (a, b, c) = fractions;
    if u < a {
        Role::Train
    } else if u < a + b {
        Role::Val
    } else if u < a + b + c {
        Role::Test
    } else {
        Role::Unused
    }
}

/// Roles of the labelled nodes of `g`.
pub fn node_roles(g: &HeteroGraph, fractions: (f64, f64, f64), seed: u64) -> BTreeMap<String, Role> {
    g.nodes()
        .filter(|(_, n)| n.label.is_some())
        .map(|(id, _)| (id.clone(), role_of(id, fractions, seed)))
        .collect()
}

fn split_of(alt: &AllotropicGraph, fractions: (f64, f64, f64), seed: u64) -> NodeSplit {
    let mut s = NodeSplit {
        train: vec![],
        val: vec![],
        test: vec![],
    };
    for (v, id) in alt.graph_node_ids().iter().enumerate() {
        if alt.labels()[v].is_none() {
            continue;
        }
        match role_of(id, fractions, seed) {
            Role::Train => s.train.push(v),
            Role::Val => s.val.push(v),
            Role::Test => s.test.push(v),
            Role::Unused => {}
        }
    }
    s
}

/// Accuracy of one strategy at one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamRecord {
    pub strategy: Strategy,
    pub t: usize,
    pub accuracy: f64,
    pub seconds: f64,
    /// Parameter entries that differ from the previous timestamp; new entries count.
    pub params_changed: usize,
    /// Hash of every parameter bit pattern after this timestamp.
    pub fingerprint: u64,
}

pub fn write_stream_records<W: Write>(out: W, records: &[StreamRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["strategy", "t", "accuracy", "seconds", "params_changed"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.strategy.to_string(),
            r.t.to_string(),
            r.accuracy.to_string(),
            r.seconds.to_string(),
            r.params_changed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn fingerprint(params: &[f64]) -> u64 {
    params.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3)
    })
}

fn changed_entries(prev: &ParamSnapshot, model: &TaskModel) -> usize {
    let mut n = 0;
    for (i, p) in model.params.iter().enumerate() {
        let cur = p.value.data();
        match prev.get(i) {
            Some(old) => {
                let old = old.data();
                n += cur.iter().zip(old).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
                n += cur.len().saturating_sub(old.len());
            }
            None => n += cur.len(),
        }
    }
    n
}

/// Keeps the leading rows of each tensor so `omega` lines up with `prev`.
fn truncate_like(omega: Vec<Tensor>, prev: &ParamSnapshot) -> Result<Vec<Tensor>> {
    omega
        .into_iter()
        .zip(prev)
        .map(|(o, p)| {
            if o.shape() == p.shape() {
                Ok(o)
            } else {
                let keep = p.len();
                Tensor::new(p.shape(), o.data()[..keep].to_vec())
            }
        })
        .collect()
}

struct Session<'a> {
    model_cfg: GrafenneConfig,
    train: &'a TrainConfig,
    cont: &'a ContinualConfig,
    seed: u64,
    exec: Execution,
    classes: usize,
}

impl Session<'_> {
    fn fresh(&self, g: &HeteroGraph) -> Result<(TaskModel, GraphInput)> {
        let mut model = TaskModel::new(EncoderKind::Grafenne, self.model_cfg, self.classes)?;
        let input = model.prepare(g.to_allotropic(), None)?;
        let split = split_of(&input.alt, self.train.fractions, self.seed);
        train_node_classifier(&mut model, &input, &split, self.train, self.seed)?;
        Ok((model, input))
    }

    fn test_accuracy(&self, model: &TaskModel, input: &GraphInput) -> Result<f64> {
        let split = split_of(&input.alt, self.train.fractions, self.seed);
        evaluate_accuracy(model, input, &split.test)
    }

    /// Steps on `nodes` with the given labels, plus the penalty when `ewc` is set.
    fn update(
        &self,
        model: &mut TaskModel,
        input: &GraphInput,
        nodes: &[usize],
        labels: &[usize],
        ewc: Option<&EwcState>,
    ) -> Result<()> {
        let mut adam = Adam::new(AdamConfig::with_lr(self.cont.lr));
        for _ in 0..self.cont.epochs {
            let mut tape = Tape::new();
            let logits = model.logits(&mut tape, input, None)?;
            let rows = tape.gather_rows(logits, nodes.to_vec())?;
            let mut loss = tape.cross_entropy(rows, labels.to_vec())?;
            if let Some(ewc) = ewc {
                let pen = ewc.penalty(&mut tape, &model.params)?;
                loss = tape.add(loss, pen)?;
            }
            let grads = tape.backward(loss)?;
            model.params.zero_grad();
            tape.accumulate_param_grads(&grads, &mut model.params);
            model.mask_frozen();
            adam.step(&mut model.params);
        }
        Ok(())
    }

    fn run(
        &self,
        strategy: Strategy,
        g1: &HeteroGraph,
        deltas: &[StreamDelta],
        start: &(TaskModel, GraphInput, f64, f64),
    ) -> Result<Vec<StreamRecord>> {
        let (mut model, mut input) = (start.0.clone(), start.1.clone());
        let mut records = vec![StreamRecord {
            strategy,
            t: 1,
            accuracy: start.2,
            seconds: start.3,
            params_changed: model.params.flatten().len(),
            fingerprint: fingerprint(&model.params.flatten()),
        }];
        let roles = node_roles(g1, self.train.fractions, self.seed);
        let train_ids: Vec<String> = roles
            .iter()
            .filter(|(_, r)| **r == Role::Train)
            .map(|(id, _)| id.clone())
            .collect();
        let u = sample_u(&train_ids, self.cont.u_size.min(train_ids.len()), self.seed)?;
        let mut buffer = ReplayBuffer::new(
            if strategy == Strategy::Er {
                self.cont.buffer_capacity()
            } else {
                0
            },
            self.seed,
        );
        for id in &train_ids {
            buffer.offer(id, g1.node(id).and_then(|n| n.label).expect("labelled"));
        }
        let mut graph = g1.clone();
        for delta in deltas {
            let clock = Instant::now();
            let (next, affected) = apply_delta(&graph, delta)?;
            graph = next;
            let prev = model.params.snapshot();
            if strategy == Strategy::Oracle {
                if !delta.is_empty() {
                    (model, input) = self.fresh(&graph)?;
                }
            } else {
                input = model.prepare(graph.to_allotropic(), None)?;
                let alt = &input.alt;
                let is_train = |id: &str| {
                    alt.graph_index(id).is_some_and(|v| alt.labels()[v].is_some())
                        && role_of(id, self.train.fractions, self.seed) == Role::Train
                };
                let delta_train: Vec<usize> = affected
                    .iter()
                    .filter(|id| is_train(id))
                    .filter_map(|id| alt.graph_index(id))
                    .collect();
                if !delta_train.is_empty() {
                    let mut nodes = delta_train.clone();
                    let mut labels: Vec<usize> = delta_train
                        .iter()
                        .map(|&v| alt.labels()[v].expect("labelled"))
                        .collect();
                    let ewc = if strategy == Strategy::Ewc {
                        let affected_set: BTreeSet<&str> = affected.iter().map(String::as_str).collect();
                        let keep: Vec<usize> = u
                            .iter()
                            .filter(|id| !affected_set.contains(id.as_str()) && is_train(id))
                            .filter_map(|id| alt.graph_index(id))
                            .collect();
                        let omega = truncate_like(compute_importance(&model, &input, &keep, self.exec)?, &prev)?;
                        Some(EwcState::new(prev.clone(), omega, self.cont.lambda, u.clone())?)
                    } else {
                        None
                    };
                    for (id, label) in buffer.items() {
                        if let Some(v) = alt.graph_index(id) {
                            nodes.push(v);
                            labels.push(*label);
                        }
                    }
                    self.update(&mut model, &input, &nodes, &labels, ewc.as_ref())?;
                    for &v in &delta_train {
                        buffer.offer(&alt.graph_node_ids()[v], alt.labels()[v].expect("labelled"));
                    }
                }
            }
            let accuracy = self.test_accuracy(&model, &input)?;
            let flat = model.params.flatten();
            records.push(StreamRecord {
                strategy,
                t: delta.t,
                accuracy,
                seconds: if self.train.record_time {
                    clock.elapsed().as_secs_f64()
                } else {
                    0.0
                },
                params_changed: changed_entries(&prev, &model),
                fingerprint: fingerprint(&flat),
            });
            log::info!("{strategy} t={} accuracy={accuracy:.4}", delta.t);
        }
        Ok(records)
    }
}

/// Runs every strategy over the stream from one shared initial model.
///
/// All strategies start from the same model trained with the full protocol on
/// `g1`; they then run through `exec` and records are returned grouped by
/// strategy in the order given.
#[allow(clippy::too_many_arguments)]
pub fn run_streams(
    g1: &HeteroGraph,
    deltas: &[StreamDelta],
    strategies: &[Strategy],
    model_cfg: &GrafenneConfig,
    train: &TrainConfig,
    cont: &ContinualConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<StreamRecord>> {
    train.validate()?;
    cont.validate()?;
    let session = Session {
        model_cfg: GrafenneConfig { seed, ..*model_cfg },
        train,
        cont,
        seed,
        exec,
        classes: g1.num_classes(),
    };
    let clock = Instant::now();
    let (model, input) = session.fresh(g1)?;
    let acc = session.test_accuracy(&model, &input)?;
    let secs = if train.record_time {
        clock.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let start = (model, input, acc, secs);
    let runs: Vec<Result<Vec<StreamRecord>>> = exec.map(strategies, |&s| session.run(s, g1, deltas, &start));
    let mut out = Vec::new();
    for r in runs {
        out.extend(r?);
    }
    Ok(out)
}

/// One strategy over the stream.
#[allow(clippy::too_many_arguments)]
pub fn run_stream(
    g1: &HeteroGraph,
    deltas: &[StreamDelta],
    strategy: Strategy,
    model_cfg: &GrafenneConfig,
    train: &TrainConfig,
    cont: &ContinualConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<StreamRecord>> {
    run_streams(g1, deltas, &[strategy], model_cfg, train, cont, seed, exec)
}
