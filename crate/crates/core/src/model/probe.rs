use rand::Rng;

use super::config::GrafenneConfig;
use super::grafenne::GrafenneModel;
use super::structure::MessageStructure;
use crate::error::{Error, Result};
use crate::graph::{AllotropicGraph, HeteroGraph};
use crate::tensor::{Adam, AdamConfig, Linear, ParamSet, Tape, Tensor, Var};

/// Settings for [`recovery_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Feature count, which is also the hidden width.
    pub dim: usize,
    pub nodes: usize,
    /// First-phase layers stacked before the linear readout.
    pub layers: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Feature values are drawn uniformly from `[low, high)` (zeros redrawn).
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            dim: 4,
            nodes: 256,
            layers: 3,
            epochs: 6000,
            lr: 1e-2,
            low: -1.0,
            high: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    /// Mean squared error of the readout before training.
    pub untrained_mse: f64,
    /// After training, on the training nodes.
    pub train_mse: f64,
    /// After training, on an equally sized set of fresh nodes.
    pub heldout_mse: f64,
    /// Mean per-coordinate variance of the targets.
    pub target_variance: f64,
}

struct ProbeData {
    alt: AllotropicGraph,
    structure: MessageStructure,
    targets: Tensor,
}

fn probe_data(cfg: &ProbeConfig, rng: &mut impl Rng, prefix: &str) -> Result<ProbeData> {
    let mut g = HeteroGraph::default();
    let mut targets = Vec::with_capacity(cfg.nodes * cfg.dim);
    for v in 0..cfg.nodes {
        let id = format!("{prefix}{v:06}");
        g.add_node(&id, None)?;
        for i in 0..cfg.dim {
            let mut x = 0.0;
            while x == 0.0 {
                x = rng.gen_range(cfg.low..cfg.high);
            }
            g.set_feature(&id, &format!("f{i:04}"), x)?;
            targets.push(x);
        }
    }
    let alt = g.to_allotropic();
    Ok(ProbeData {
        structure: MessageStructure::full(&alt)?,
        alt,
        targets: Tensor::matrix(cfg.nodes, cfg.dim, targets)?,
    })
}

fn probe_loss(
    tape: &mut Tape,
    model: &GrafenneModel,
    readout: &Linear,
    params: &ParamSet,
    data: &ProbeData,
) -> Result<Var> {
    let mut state = model.init_states(tape, params, &data.alt)?;
    for layer in &model.layers {
        state.graph = layer
            .phase1(tape, params, &data.structure, state.graph, state.features)?
            .0;
    }
    let pred = readout.forward(tape, params, state.graph)?;
    let target = tape.constant(data.targets.clone());
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    tape.mean(sq)
}

/// Trains a stack of first-phase layers plus a linear readout to reproduce
/// each node's feature vector from its allotropic encoding.
///
/// Every node carries all `dim` features; feature embeddings are fixed one-hot
/// vectors. Returns the reconstruction error before and after training.
pub fn recovery_probe(cfg: &ProbeConfig) -> Result<ProbeResult> {
    if cfg.dim == 0 || cfg.nodes == 0 || cfg.layers == 0 || cfg.low.is_nan() || cfg.high.is_nan() || cfg.low >= cfg.high
    {
        return Err(Error::invalid(format!("bad probe config {cfg:?}")));
    }
    let mut rng = crate::rng_for(cfg.seed, "probe");
    let train = probe_data(cfg, &mut rng, "t")?;
    let heldout = probe_data(cfg, &mut rng, "h")?;

    let mut params = ParamSet::new();
    let config = GrafenneConfig {
        layers: cfg.layers,
        dim: cfg.dim,
        seed: cfg.seed,
        ..GrafenneConfig::default()
    };
    let mut model = GrafenneModel::new(&mut params, config)?;
    for i in 0..cfg.dim {
        let mut one_hot = vec![0.0; cfg.dim];
        one_hot[i] = 1.0;
        model.table.set_row(&mut params, &format!("f{i:04}"), &one_hot)?;
    }
    let readout = Linear::new(
        &mut params,
        &mut crate::rng_for(cfg.seed, "probe/readout"),
        "readout",
        cfg.dim,
        cfg.dim,
        true,
    )?;
    let frozen = model.embedding_param();

    let mse = |params: &ParamSet, data: &ProbeData| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = probe_loss(&mut tape, &model, &readout, params, data)?;
        Ok(tape.value(loss).item())
    };
    let untrained_mse = mse(&params, &train)?;

    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let loss = probe_loss(&mut tape, &model, &readout, &params, &train)?;
        let grads = tape.backward(loss)?;
        params.zero_grad();
        tape.accumulate_param_grads(&grads, &mut params);
        params.zero_grad_of(frozen);
        adam.step(&mut params);
    }

    let t = train.targets.data();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    let target_variance = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t.len() as f64;
    Ok(ProbeResult {
        untrained_mse,
        train_mse: mse(&params, &train)?,
        heldout_mse: mse(&params, &heldout)?,
        target_variance,
    })
}
