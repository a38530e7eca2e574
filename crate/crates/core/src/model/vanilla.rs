use super::config::{Backend, GrafenneConfig};
use super::embedding::FeatureEmbeddingTable;
use super::layers::GraphConv;
use super::structure::GraphAdjacency;
use crate::error::Result;
use crate::graph::AllotropicGraph;
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Plain GraphSAGE over the whole allotropic graph (ablation baseline).
///
/// Graph and feature nodes share one weight set per layer. A feature edge
/// carries its value as a message weight; graph edges carry weight 1.
#[derive(Clone, Debug, PartialEq)]
pub struct VanillaAltModel {
    pub config: GrafenneConfig,
    pub table: FeatureEmbeddingTable,
    pub layers: Vec<GraphConv>,
}

impl VanillaAltModel {
    pub fn new(params: &mut ParamSet, config: GrafenneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng_for(config.seed, "vanilla");
        let table = FeatureEmbeddingTable::new(params, "embedding", config.dim, config.seed)?;
        let layers = (0..config.layers)
            .map(|l| {
                GraphConv::new(
                    params,
                    &mut rng,
                    &format!("layer{l}"),
                    Backend::Sage,
                    config.dim,
                    config.dim,
                    config.leaky_slope,
                    config.gin_epsilon,
                )
            })
            .collect::<Result<_>>()?;
        Ok(VanillaAltModel { config, table, layers })
    }

    pub fn ensure_features(&mut self, params: &mut ParamSet, alt: &AllotropicGraph) -> Result<usize> {
        self.table
            .ensure(params, alt.feature_node_ids().iter().map(String::as_str))
    }

    /// Adjacency over `V^alt`: graph nodes take indices `0..|V|`, feature nodes follow.
    pub fn adjacency(alt: &AllotropicGraph) -> Result<GraphAdjacency> {
        let n = alt.num_graph_nodes();
        let fe = alt.feature_edges();
        let mut lists = Vec::with_capacity(alt.num_alt_nodes());
        let mut weights = Vec::with_capacity(alt.num_alt_nodes());
        for v in 0..n {
            let mut l: Vec<usize> = alt.graph_neighbors(v).to_vec();
            let mut w = vec![1.0; l.len()];
            for &e in alt.feature_neighbors(v) {
                l.push(n + fe[e].feature);
                w.push(fe[e].weight);
            }
            lists.push(l);
            weights.push(w);
        }
        for f in 0..alt.num_feature_nodes() {
            let inc = alt.feature_incident(f);
            lists.push(inc.iter().map(|&e| fe[e].node).collect());
            weights.push(inc.iter().map(|&e| fe[e].weight).collect());
        }
        GraphAdjacency::from_lists(&lists, Some(&weights))
    }

    /// Graph-node representations `[|V|, d]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        alt: &AllotropicGraph,
        adj: &GraphAdjacency,
    ) -> Result<Var> {
        let n = alt.num_graph_nodes();
        let rows = self.table.rows_for(alt)?;
        let zeros = tape.constant(Tensor::zeros(&[n, self.config.dim]));
        let table = tape.param(params, self.table.param());
        let feats = tape.gather_rows(table, rows)?;
        let mut h = tape.concat(&[zeros, feats], 0)?;
        for layer in &self.layers {
            h = layer.forward(tape, params, h, adj)?;
        }
        tape.gather_rows(h, (0..n).collect::<Vec<_>>())
    }
}
