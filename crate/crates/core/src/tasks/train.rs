use std::fmt;
use std::str::FromStr;

use super::link::{labelled_pairs, link_score, LinkSplit, Pair};
use super::metrics::{accuracy, argmax_rows, auc_roc};
use super::model::{labels_of, node_loss, GraphInput, TaskModel};
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, ParamSnapshot, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    LinkPrediction,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::NodeClassification => "node_classification",
            Task::LinkPrediction => "link_prediction",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node_classification" | "nc" => Ok(Task::NodeClassification),
            "link_prediction" | "lp" => Ok(Task::LinkPrediction),
            _ => Err(Error::invalid(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub lr: f64,
    /// Stop after this many epochs without a new best validation loss; 0 disables.
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Train / validation / test fractions of labelled nodes (or of edges).
    pub fractions: (f64, f64, f64),
    /// Negatives drawn per positive edge in each link-prediction part.
    pub neg_ratio: usize,
    /// Fill the seconds column of result rows; off keeps outputs byte-stable.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::NodeClassification,
            epochs: 1000,
            lr: 1e-4,
            patience: 200,
            seeds: (0..5).collect(),
            fractions: (0.6, 0.2, 0.2),
            neg_ratio: 1,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.lr)));
        }
        if self.neg_ratio == 0 {
            return Err(Error::invalid("negative ratio must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds given"));
        }
        Ok(())
    }
}

/// Summary of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    /// Validation loss observed at every epoch, before that epoch's update.
    pub val_history: Vec<f64>,
    /// Accuracy or AUC on the test part with the kept parameters.
    pub test_metric: f64,
}

/// Best-validation bookkeeping shared by both tasks.
struct Selector {
    best: f64,
    best_epoch: usize,
    snapshot: Option<ParamSnapshot>,
    since: usize,
    history: Vec<f64>,
}

impl Selector {
    fn new() -> Self {
        Selector {
            best: f64::INFINITY,
            best_epoch: 0,
            snapshot: None,
            since: 0,
            history: Vec::new(),
        }
    }

    /// Records `val` for the parameters in `model`; returns false when patience runs out.
    fn observe(&mut self, epoch: usize, val: f64, model: &TaskModel, patience: usize) -> bool {
        self.history.push(val);
        if val < self.best || self.snapshot.is_none() {
            self.best = val;
            self.best_epoch = epoch;
            self.snapshot = Some(model.params.snapshot());
            self.since = 0;
        } else {
            self.since += 1;
        }
        patience == 0 || self.since < patience
    }
}

fn step(tape: &Tape, loss: Var, model: &mut TaskModel, adam: &mut Adam) -> Result<()> {
    let grads = tape.backward(loss)?;
    model.params.zero_grad();
    tape.accumulate_param_grads(&grads, &mut model.params);
    model.mask_frozen();
    adam.step(&mut model.params);
    Ok(())
}

/// Split node indices, all labelled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Full-batch training with best-validation-loss model selection.
///
/// The validation loss of epoch `e` is measured on the same forward pass as
/// the training loss, i.e. for the parameters before that epoch's update,
/// and those are the parameters snapshotted. Sampled encoders get a separate
/// full-neighbourhood forward for validation.
pub fn train_node_classifier(
    model: &mut TaskModel,
    input: &GraphInput,
    split: &NodeSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for (name, part) in [
        ("train", &split.train),
        ("validation", &split.val),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(Error::EmptyPartition(format!("{name} nodes")));
        }
    }
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = crate::rng_for(seed, "train/sample");
    let mut sel = Selector::new();
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        epochs_run += 1;
        let mut tape = Tape::new();
        let logits = model.logits(&mut tape, input, Some(&mut rng))?;
        let loss = node_loss(&mut tape, logits, &input.alt, &split.train)?;
        let val = if model.samples() {
            let mut t = Tape::new();
            let l = model.logits(&mut t, input, None)?;
            let v = node_loss(&mut t, l, &input.alt, &split.val)?;
            t.value(v).item()
        } else {
            let v = node_loss(&mut tape, logits, &input.alt, &split.val)?;
            tape.value(v).item()
        };
        let go_on = sel.observe(epoch, val, model, cfg.patience);
        if !go_on {
            break;
        }
        step(&tape, loss, model, &mut adam)?;
    }
    model
        .params
        .restore(sel.snapshot.as_ref().expect("at least one epoch"))?;
    Ok(TrainOutcome {
        best_epoch: sel.best_epoch,
        best_val_loss: sel.best,
        epochs_run,
        val_history: sel.history,
        test_metric: evaluate_accuracy(model, input, &split.test)?,
    })
}

/// Accuracy on `nodes` with full neighbourhoods.
pub fn evaluate_accuracy(model: &TaskModel, input: &GraphInput, nodes: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let logits = model.logits(&mut tape, input, None)?;
    let t = tape.value(logits);
    let preds = argmax_rows(t.data(), t.cols());
    let picked: Vec<usize> = nodes.iter().map(|&v| preds[v]).collect();
    accuracy(&picked, &labels_of(&input.alt, nodes)?)
}

fn pair_loss(tape: &mut Tape, h: Var, pos: &[Pair], neg: &[Pair]) -> Result<Var> {
    let (pairs, targets) = labelled_pairs(pos, neg);
    let s = link_score(tape, h, &pairs)?;
    tape.bce_with_logits(s, targets)
}

/// Link prediction on `input` (the graph without validation and test edges).
pub fn train_link_predictor(
    model: &mut TaskModel,
    input: &GraphInput,
    split: &LinkSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = crate::rng_for(seed, "train/sample");
    let mut sel = Selector::new();
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        epochs_run += 1;
        let mut tape = Tape::new();
        let h = model.encode(&mut tape, input, Some(&mut rng))?;
        let loss = pair_loss(&mut tape, h, &split.train_pos, &split.train_neg)?;
        let val = if model.samples() {
            let mut t = Tape::new();
            let h = model.encode(&mut t, input, None)?;
            let v = pair_loss(&mut t, h, &split.val_pos, &split.val_neg)?;
            t.value(v).item()
        } else {
            let v = pair_loss(&mut tape, h, &split.val_pos, &split.val_neg)?;
            tape.value(v).item()
        };
        if !sel.observe(epoch, val, model, cfg.patience) {
            break;
        }
        step(&tape, loss, model, &mut adam)?;
    }
    model
        .params
        .restore(sel.snapshot.as_ref().expect("at least one epoch"))?;
    Ok(TrainOutcome {
        best_epoch: sel.best_epoch,
        best_val_loss: sel.best,
        epochs_run,
        val_history: sel.history,
        test_metric: evaluate_auc(model, input, &split.test_pos, &split.test_neg)?,
    })
}

pub fn evaluate_auc(model: &TaskModel, input: &GraphInput, pos: &[Pair], neg: &[Pair]) -> Result<f64> {
    let mut tape = Tape::new();
    let h = model.encode(&mut tape, input, None)?;
    let (pairs, targets) = labelled_pairs(pos, neg);
    let s = link_score(&mut tape, h, &pairs)?;
    let targets: Vec<bool> = targets.iter().map(|&t| t == 1.0).collect();
    auc_roc(tape.value(s).data(), &targets)
}
