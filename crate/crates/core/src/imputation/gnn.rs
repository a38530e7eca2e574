use crate::error::Result;
use crate::graph::AllotropicGraph;
use crate::model::{Backend, GrafenneConfig, GraphAdjacency, GraphConv};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Plain `L`-layer GNN over graph edges with `h^0 = x_v`.
///
/// The first layer is sized by the feature count, so unlike the feature-node
/// model its parameter count depends on `|F|`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGnn {
    pub config: GrafenneConfig,
    pub in_dim: usize,
    pub layers: Vec<GraphConv>,
}

impl DenseGnn {
    pub fn new(params: &mut ParamSet, config: GrafenneConfig, in_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng_for(config.seed, "dense-gnn");
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { in_dim } else { config.dim };
                GraphConv::new(
                    params,
                    &mut rng,
                    &format!("layer{l}"),
                    config.backend,
                    input,
                    config.dim,
                    config.leaky_slope,
                    config.gin_epsilon,
                )
            })
            .collect::<Result<_>>()?;
        Ok(DenseGnn { config, in_dim, layers })
    }

    pub fn adjacency(alt: &AllotropicGraph) -> Result<GraphAdjacency> {
        let lists: Vec<Vec<usize>> = (0..alt.num_graph_nodes())
            .map(|v| alt.graph_neighbors(v).to_vec())
            .collect();
        GraphAdjacency::from_lists(&lists, None)
    }

    /// `x` is `[|V|, in_dim]`; returns `[|V|, d]`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: &Tensor, adj: &GraphAdjacency) -> Result<Var> {
        let mut h = tape.constant(x.clone());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, params, h, adj)?;
            // Attention layers have no output activation of their own.
            if self.config.backend == Backend::Gat && l < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
