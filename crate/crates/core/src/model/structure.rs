use std::sync::Arc;

use rand::Rng;

use super::config::SamplingCaps;
use crate::error::Result;
use crate::graph::AllotropicGraph;
use crate::tensor::{Segments, Tensor};

/// Uniform sample of `min(cap, len)` items without replacement, kept in input order.
///
/// `cap == 0` or `cap >= len` returns the whole list.
pub fn sample_caps<T: Copy>(items: &[T], cap: usize, rng: &mut impl Rng) -> Vec<T> {
    if cap == 0 || cap >= items.len() {
        return items.to_vec();
    }
    let mut picked = rand::seq::index::sample(rng, items.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i]).collect()
}

/// Directed message list `src → dst`, grouped by `dst` in ascending order.
#[derive(Clone, Debug)]
pub struct EdgeList {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Per-message scalar weight as an `[E, 1]` column.
    pub weight: Tensor,
    pub segments: Arc<Segments>,
    pub targets: usize,
}

impl EdgeList {
    /// Builds from per-target lists of `(source, weight)`.
    pub fn from_groups(groups: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let targets = groups.len();
        let total: usize = groups.iter().map(Vec::len).sum();
        let (mut src, mut dst, mut w) = (
            Vec::with_capacity(total),
            Vec::with_capacity(total),
            Vec::with_capacity(total),
        );
        let mut segs = Vec::with_capacity(targets);
        for (t, group) in groups.into_iter().enumerate() {
            let start = src.len();
            for (s, x) in group {
                src.push(s);
                dst.push(t);
                w.push(x);
            }
            segs.push((start..src.len()).collect());
        }
        Ok(EdgeList {
            segments: Arc::new(Segments::new(segs, total)?),
            weight: Tensor::matrix(total, 1, w)?,
            src: src.into(),
            dst: dst.into(),
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// `1 / |group|` per target (zero for empty groups), as `[targets, 1]`.
    pub fn inverse_degree(&self) -> Tensor {
        let data = self
            .segments
            .groups()
            .iter()
            .map(|g| if g.is_empty() { 0.0 } else { 1.0 / g.len() as f64 })
            .collect();
        Tensor::matrix(self.targets, 1, data).expect("one entry per target")
    }
}

/// Graph-node adjacency for the second phase.
#[derive(Clone, Debug)]
pub struct GraphAdjacency {
    /// `N_v^G` for every graph node.
    pub neighbors: EdgeList,
    /// `N_v^G ∪ {v}`, used by attention.
    pub with_self: EdgeList,
}

impl GraphAdjacency {
    pub fn from_lists(lists: &[Vec<usize>], weights: Option<&[Vec<f64>]>) -> Result<Self> {
        let groups: Vec<Vec<(usize, f64)>> = lists
            .iter()
            .enumerate()
            .map(|(v, l)| {
                l.iter()
                    .enumerate()
                    .map(|(i, &u)| (u, weights.map_or(1.0, |w| w[v][i])))
                    .collect()
            })
            .collect();
        let with_self = groups
            .iter()
            .enumerate()
            .map(|(v, g)| {
                let mut g = g.clone();
                let at = g.partition_point(|&(u, _)| u < v);
                g.insert(at, (v, 1.0));
                g
            })
            .collect();
        Ok(GraphAdjacency {
            neighbors: EdgeList::from_groups(groups)?,
            with_self: EdgeList::from_groups(with_self)?,
        })
    }
}

/// Everything one forward pass needs to know about the allotropic graph.
#[derive(Clone, Debug)]
pub struct MessageStructure {
    pub graph_nodes: usize,
    pub feature_nodes: usize,
    /// Feature node → graph node messages (first phase), weights `e_uv`.
    pub to_graph: EdgeList,
    /// Graph node → feature node messages (third phase), weights `e_uv`.
    pub to_features: EdgeList,
    pub graph: GraphAdjacency,
}

impl MessageStructure {
    /// Full neighbourhoods.
    pub fn full(alt: &AllotropicGraph) -> Result<Self> {
        Self::build(alt, SamplingCaps::default(), &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    /// Neighbourhoods subsampled according to `caps`.
    pub fn build(alt: &AllotropicGraph, caps: SamplingCaps, rng: &mut impl Rng) -> Result<Self> {
        let fe = alt.feature_edges();
        let to_graph = (0..alt.num_graph_nodes())
            .map(|v| {
                sample_caps(alt.feature_neighbors(v), caps.features, rng)
                    .into_iter()
                    .map(|e| (fe[e].feature, fe[e].weight))
                    .collect()
            })
            .collect();
        let to_features = (0..alt.num_feature_nodes())
            .map(|f| {
                sample_caps(alt.feature_incident(f), caps.nodes, rng)
                    .into_iter()
                    .map(|e| (fe[e].node, fe[e].weight))
                    .collect()
            })
            .collect();
        let lists: Vec<Vec<usize>> = (0..alt.num_graph_nodes())
            .map(|v| sample_caps(alt.graph_neighbors(v), caps.graph, rng))
            .collect();
        Ok(MessageStructure {
            graph_nodes: alt.num_graph_nodes(),
            feature_nodes: alt.num_feature_nodes(),
            to_graph: EdgeList::from_groups(to_graph)?,
            to_features: EdgeList::from_groups(to_features)?,
            graph: GraphAdjacency::from_lists(&lists, None)?,
        })
    }
}
