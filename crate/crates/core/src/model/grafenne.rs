use super::config::GrafenneConfig;
use super::embedding::FeatureEmbeddingTable;
use super::layers::GrafenneLayer;
use super::structure::MessageStructure;
use crate::error::Result;
use crate::graph::AllotropicGraph;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

/// Graph-node and feature-node states at one layer boundary.
#[derive(Clone, Copy, Debug)]
pub struct LayerState {
    /// `[|V|, d]`
    pub graph: Var,
    /// `[|F|, d]`
    pub features: Var,
}

/// `L` stacked three-phase layers plus the feature-embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct GrafenneModel {
    pub config: GrafenneConfig,
    pub table: FeatureEmbeddingTable,
    pub layers: Vec<GrafenneLayer>,
}

impl GrafenneModel {
    /// Registers all parameters in `params`. The table starts empty.
    pub fn new(params: &mut ParamSet, config: GrafenneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng_for(config.seed, "grafenne");
        let table = FeatureEmbeddingTable::new(params, "embedding", config.dim, config.seed)?;
        let layers = (0..config.layers)
            .map(|l| {
                GrafenneLayer::new(
                    params,
                    &mut rng,
                    &format!("layer{l}"),
                    config.dim,
                    config.backend,
                    config.leaky_slope,
                    config.gin_epsilon,
                )
            })
            .collect::<Result<_>>()?;
        Ok(GrafenneModel { config, table, layers })
    }

    /// Adds embedding rows for feature nodes of `alt` not seen before.
    pub fn ensure_features(&mut self, params: &mut ParamSet, alt: &AllotropicGraph) -> Result<usize> {
        self.table
            .ensure(params, alt.feature_node_ids().iter().map(String::as_str))
    }

    pub fn embedding_param(&self) -> ParamId {
        self.table.param()
    }

    /// `h_v^0 = 0` for graph nodes and `h_u^0 = w_u` for feature nodes.
    pub fn init_states(&self, tape: &mut Tape, params: &ParamSet, alt: &AllotropicGraph) -> Result<LayerState> {
        let rows = self.table.rows_for(alt)?;
        let graph = tape.constant(Tensor::zeros(&[alt.num_graph_nodes(), self.config.dim]));
        let table = tape.param(params, self.table.param());
        let features = tape.gather_rows(table, rows)?;
        Ok(LayerState { graph, features })
    }

    /// Runs all layers. With `with_features == false` the last layer's third
    /// phase is skipped: it cannot influence graph-node outputs.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        alt: &AllotropicGraph,
        s: &MessageStructure,
        with_features: bool,
    ) -> Result<LayerState> {
        let mut state = self.init_states(tape, params, alt)?;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (h1, _) = layer.phase1(tape, params, s, state.graph, state.features)?;
            let h2 = layer.phase2(tape, params, s, h1)?;
            if l < last || with_features {
                let (hf, _) = layer.phase3(tape, params, s, state.features, h2)?;
                state.features = hf;
            }
            state.graph = h2;
        }
        Ok(state)
    }
}
