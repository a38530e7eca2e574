use crate::error::{Error, Result};
use crate::graph::AllotropicGraph;
use crate::imputation::DenseGnn;
use crate::model::{GrafenneConfig, GrafenneModel, GraphAdjacency, MessageStructure, VanillaAltModel};
use crate::tensor::{Linear, ParamId, ParamSet, Tape, Tensor, Var};
use crate::SeededRng;

/// Which representation learner sits under the task head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    Grafenne,
    VanillaAlt,
    /// Standard GNN over a dense feature matrix of the given width.
    Dense {
        in_dim: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Grafenne(GrafenneModel),
    VanillaAlt(VanillaAltModel),
    Dense(DenseGnn),
}

/// A graph with everything an encoder needs precomputed.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub alt: AllotropicGraph,
    /// `[|V|, |F|]` feature matrix for dense encoders.
    pub dense: Option<Tensor>,
    structure: Option<MessageStructure>,
    adjacency: Option<GraphAdjacency>,
}

impl GraphInput {
    pub fn num_nodes(&self) -> usize {
        self.alt.num_graph_nodes()
    }
}

/// Encoder, optional classification head and the parameters of both.
#[derive(Clone, Debug)]
pub struct TaskModel {
    pub encoder: Encoder,
    /// `d → C` linear map; absent for link prediction.
    pub head: Option<Linear>,
    pub params: ParamSet,
    /// Parameters held fixed by the optimiser.
    pub frozen: Vec<ParamId>,
}

impl TaskModel {
    /// `classes == 0` builds no head.
    pub fn new(kind: EncoderKind, config: GrafenneConfig, classes: usize) -> Result<Self> {
        let mut params = ParamSet::new();
        let encoder = match kind {
            EncoderKind::Grafenne => Encoder::Grafenne(GrafenneModel::new(&mut params, config)?),
            EncoderKind::VanillaAlt => Encoder::VanillaAlt(VanillaAltModel::new(&mut params, config)?),
            EncoderKind::Dense { in_dim } => Encoder::Dense(DenseGnn::new(&mut params, config, in_dim)?),
        };
        let head = if classes > 0 {
            let mut rng = crate::rng_for(config.seed, "head");
            Some(Linear::new(&mut params, &mut rng, "head", config.dim, classes, true)?)
        } else {
            None
        };
        Ok(TaskModel {
            encoder,
            head,
            params,
            frozen: Vec::new(),
        })
    }

    pub fn config(&self) -> &GrafenneConfig {
        match &self.encoder {
            Encoder::Grafenne(m) => &m.config,
            Encoder::VanillaAlt(m) => &m.config,
            Encoder::Dense(m) => &m.config,
        }
    }

    /// Adds embedding rows for unseen features. Dense encoders have a fixed
    /// input width and cannot grow.
    pub fn ensure_features(&mut self, alt: &AllotropicGraph) -> Result<usize> {
        match &mut self.encoder {
            Encoder::Grafenne(m) => m.ensure_features(&mut self.params, alt),
            Encoder::VanillaAlt(m) => m.ensure_features(&mut self.params, alt),
            Encoder::Dense(_) => Ok(0),
        }
    }

    /// Loads fixed feature vectors into the embedding table and freezes it.
    pub fn use_pretrained(&mut self, rows: &[(String, Vec<f64>)]) -> Result<()> {
        let table = match &mut self.encoder {
            Encoder::Grafenne(m) => &mut m.table,
            Encoder::VanillaAlt(m) => &mut m.table,
            Encoder::Dense(_) => return Err(Error::invalid("dense encoders have no feature embeddings")),
        };
        for (f, v) in rows {
            table.set_row(&mut self.params, f, v)?;
        }
        let id = table.param();
        if !self.frozen.contains(&id) {
            self.frozen.push(id);
        }
        Ok(())
    }

    /// Zeroes the gradients of frozen parameters.
    pub fn mask_frozen(&mut self) {
        for &id in &self.frozen {
            self.params.zero_grad_of(id);
        }
    }

    /// Precomputes message structures; also grows the embedding table.
    pub fn prepare(&mut self, alt: AllotropicGraph, dense: Option<Tensor>) -> Result<GraphInput> {
        self.ensure_features(&alt)?;
        let (structure, adjacency) = match &self.encoder {
            Encoder::Grafenne(_) => (Some(MessageStructure::full(&alt)?), None),
            Encoder::VanillaAlt(_) => (None, Some(VanillaAltModel::adjacency(&alt)?)),
            Encoder::Dense(m) => {
                let x = dense
                    .as_ref()
                    .ok_or_else(|| Error::invalid("dense encoder needs a feature matrix"))?;
                if x.shape() != [alt.num_graph_nodes(), m.in_dim] {
                    return Err(Error::shape(
                        "dense input",
                        x.shape(),
                        &[alt.num_graph_nodes(), m.in_dim],
                    ));
                }
                (None, Some(DenseGnn::adjacency(&alt)?))
            }
        };
        Ok(GraphInput {
            alt,
            dense,
            structure,
            adjacency,
        })
    }

    /// Graph-node representations `[|V|, d]`. With `sample`, neighbourhoods
    /// are subsampled by the configured caps.
    pub fn encode(&self, tape: &mut Tape, input: &GraphInput, sample: Option<&mut SeededRng>) -> Result<Var> {
        let missing = || Error::invalid("graph input was prepared for a different encoder");
        match &self.encoder {
            Encoder::Grafenne(m) => {
                let sampled;
                let s = match sample {
                    Some(rng) if m.config.caps.is_active() => {
                        sampled = MessageStructure::build(&input.alt, m.config.caps, rng)?;
                        &sampled
                    }
                    _ => input.structure.as_ref().ok_or_else(missing)?,
                };
                Ok(m.forward(tape, &self.params, &input.alt, s, false)?.graph)
            }
            Encoder::VanillaAlt(m) => m.forward(
                tape,
                &self.params,
                &input.alt,
                input.adjacency.as_ref().ok_or_else(missing)?,
            ),
            Encoder::Dense(m) => m.forward(
                tape,
                &self.params,
                input.dense.as_ref().ok_or_else(missing)?,
                input.adjacency.as_ref().ok_or_else(missing)?,
            ),
        }
    }

    /// Class logits `[|V|, C]`.
    pub fn logits(&self, tape: &mut Tape, input: &GraphInput, sample: Option<&mut SeededRng>) -> Result<Var> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no classification head"))?;
        let h = self.encode(tape, input, sample)?;
        head.forward(tape, &self.params, h)
    }

    /// True when training forwards differ from evaluation forwards.
    pub fn samples(&self) -> bool {
        matches!(&self.encoder, Encoder::Grafenne(m) if m.config.caps.is_active())
    }
}

/// Mean cross-entropy of `logits` rows `nodes` against their labels in `alt`.
pub fn node_loss(tape: &mut Tape, logits: Var, alt: &AllotropicGraph, nodes: &[usize]) -> Result<Var> {
    let labels = labels_of(alt, nodes)?;
    let rows = tape.gather_rows(logits, nodes.to_vec())?;
    tape.cross_entropy(rows, labels)
}

pub fn labels_of(alt: &AllotropicGraph, nodes: &[usize]) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&v| {
            alt.labels()[v].ok_or_else(|| Error::invalid(format!("node `{}` has no label", alt.graph_node_ids()[v])))
        })
        .collect()
}
