use std::collections::BTreeMap;

use super::{FeatureMap, HeteroGraph};

/// Edge between graph node `node` and feature node `feature`, weighted by `x_v[f]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureEdge {
    pub node: usize,
    pub feature: usize,
    pub weight: f64,
}

/// The graph with every distinct feature lifted into a feature node.
///
/// Graph nodes are indexed `0..|V|` and feature nodes `0..|F|`, each in sorted
/// external-id order. All adjacency lists are ascending, which fixes the order
/// of every aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct AllotropicGraph {
    graph_nodes: Vec<String>,
    feature_nodes: Vec<String>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    feature_edges: Vec<FeatureEdge>,
    node_graph: Vec<Vec<usize>>,
    node_feat: Vec<Vec<usize>>,
    feat_nodes: Vec<Vec<usize>>,
}

fn index_of(sorted: &[String], id: &str) -> Option<usize> {
    sorted.binary_search_by(|x| x.as_str().cmp(id)).ok()
}

impl AllotropicGraph {
    pub fn new(g: &HeteroGraph) -> Self {
        let graph_nodes: Vec<String> = g.node_ids().cloned().collect();
        let feature_nodes: Vec<String> = g.feature_ids().into_iter().map(String::from).collect();
        let labels = g.nodes().map(|(_, n)| n.label).collect();

        let mut edges: Vec<(usize, usize)> = g
            .edges()
            .map(|(a, b)| {
                let (i, j) = (
                    index_of(&graph_nodes, a).expect("edge endpoint is a node"),
                    index_of(&graph_nodes, b).expect("edge endpoint is a node"),
                );
                (i.min(j), i.max(j))
            })
            .collect();
        edges.sort_unstable();

        let mut node_graph = vec![Vec::new(); graph_nodes.len()];
        for &(a, b) in &edges {
            node_graph[a].push(b);
            node_graph[b].push(a);
        }
        node_graph.iter_mut().for_each(|l| l.sort_unstable());

        let mut feature_edges = Vec::with_capacity(g.num_entries());
        let mut node_feat = vec![Vec::new(); graph_nodes.len()];
        let mut feat_nodes = vec![Vec::new(); feature_nodes.len()];
        for (v, (_, data)) in g.nodes().enumerate() {
            for (f, &w) in &data.features {
                let fi = index_of(&feature_nodes, f).expect("feature is registered");
                node_feat[v].push(feature_edges.len());
                feat_nodes[fi].push(feature_edges.len());
                feature_edges.push(FeatureEdge {
                    node: v,
                    feature: fi,
                    weight: w,
                });
            }
        }

        AllotropicGraph {
            graph_nodes,
            feature_nodes,
            labels,
            num_classes: g.num_classes(),
            edges,
            feature_edges,
            node_graph,
            node_feat,
            feat_nodes,
        }
    }

    pub fn num_graph_nodes(&self) -> usize {
        self.graph_nodes.len()
    }

    pub fn num_feature_nodes(&self) -> usize {
        self.feature_nodes.len()
    }

    /// `|V^alt| = |V| + |F|`.
    pub fn num_alt_nodes(&self) -> usize {
        self.graph_nodes.len() + self.feature_nodes.len()
    }

    /// `|E^alt| = |E| + |E^feat|`.
    pub fn num_alt_edges(&self) -> usize {
        self.edges.len() + self.feature_edges.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn graph_node_ids(&self) -> &[String] {
        &self.graph_nodes
    }

    pub fn feature_node_ids(&self) -> &[String] {
        &self.feature_nodes
    }

    pub fn graph_index(&self, id: &str) -> Option<usize> {
        index_of(&self.graph_nodes, id)
    }

    pub fn feature_index(&self, id: &str) -> Option<usize> {
        index_of(&self.feature_nodes, id)
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Canonical graph edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Feature edges sorted by `(node, feature)`.
    pub fn feature_edges(&self) -> &[FeatureEdge] {
        &self.feature_edges
    }

    /// `N_v^G`, ascending.
    pub fn graph_neighbors(&self, v: usize) -> &[usize] {
        &self.node_graph[v]
    }

    /// Indices into [`Self::feature_edges`] of `N_v^feat`, ascending by feature.
    pub fn feature_neighbors(&self, v: usize) -> &[usize] {
        &self.node_feat[v]
    }

    /// Indices into [`Self::feature_edges`] of the graph nodes incident to feature `f`, ascending by node.
    pub fn feature_incident(&self, f: usize) -> &[usize] {
        &self.feat_nodes[f]
    }

    /// Reads the feature edges back into per-node maps.
    pub fn project_back(&self) -> BTreeMap<String, FeatureMap> {
        let mut out: BTreeMap<String, FeatureMap> = self
            .graph_nodes
            .iter()
            .map(|id| (id.clone(), FeatureMap::new()))
            .collect();
        for e in &self.feature_edges {
            out.get_mut(&self.graph_nodes[e.node])
                .expect("node present")
                .insert(self.feature_nodes[e.feature].clone(), e.weight);
        }
        out
    }
}

impl HeteroGraph {
    pub fn to_allotropic(&self) -> AllotropicGraph {
        AllotropicGraph::new(self)
    }
}
