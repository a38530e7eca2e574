//! Graphs whose nodes carry sparse, per-node feature maps.

mod alt;
pub mod io;
mod split;
mod stream;

pub use alt::{AllotropicGraph, FeatureEdge};
pub use split::{make_split, split_sizes, Split};
pub use stream::{apply_delta, generate_stream, DeltaOp, StreamConfig, StreamDelta};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};

/// Sparse feature map of one node. Stored values are never zero.
pub type FeatureMap = BTreeMap<String, f64>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeData {
    pub features: FeatureMap,
    pub label: Option<usize>,
}

/// Nodes with heterogeneous feature sets, undirected edges and optional labels.
///
/// Node, feature and class identifiers are external strings. Every iteration
/// order is the sorted order of those strings, which is what makes dense index
/// assignment deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeteroGraph {
    nodes: BTreeMap<String, NodeData>,
    edges: BTreeSet<(String, String)>,
    classes: Vec<String>,
}

pub(crate) fn canonical(u: &str, v: &str) -> (String, String) {
    if u <= v {
        (u.to_string(), v.to_string())
    } else {
        (v.to_string(), u.to_string())
    }
}

impl HeteroGraph {
    /// An empty graph whose labels index into `classes`.
    pub fn with_classes(classes: Vec<String>) -> Self {
        HeteroGraph {
            classes,
            ..Self::default()
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&NodeData> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&String, &NodeData)> {
        self.nodes.iter()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &String> {
        self.nodes.keys()
    }

    /// Canonical `(min, max)` pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = &(String, String)> {
        self.edges.iter()
    }

    pub fn has_edge(&self, u: &str, v: &str) -> bool {
        self.edges.contains(&canonical(u, v))
    }

    /// The registry `F`: union of every node's feature keys, sorted.
    pub fn feature_ids(&self) -> BTreeSet<&str> {
        self.nodes
            .values()
            .flat_map(|n| n.features.keys().map(String::as_str))
            .collect()
    }

    pub fn num_features(&self) -> usize {
        self.feature_ids().len()
    }

    /// Number of stored `(node, feature)` entries, `Σ_v |F_v|`.
    pub fn num_entries(&self) -> usize {
        self.nodes.values().map(|n| n.features.len()).sum()
    }

    /// True when every stored value is exactly 1.
    pub fn is_binary(&self) -> bool {
        self.nodes.values().all(|n| n.features.values().all(|&x| x == 1.0))
    }

    pub fn feature_maps(&self) -> BTreeMap<String, FeatureMap> {
        self.nodes
            .iter()
            .map(|(k, n)| (k.clone(), n.features.clone()))
            .collect()
    }

    pub fn add_node(&mut self, id: impl Into<String>, label: Option<usize>) -> Result<()> {
        let id = id.into();
        if self.nodes.contains_key(&id) {
            return Err(Error::Integrity(format!("node `{id}` already exists")));
        }
        self.check_label(label)?;
        self.nodes.insert(
            id,
            NodeData {
                features: FeatureMap::new(),
                label,
            },
        );
        Ok(())
    }

    fn check_label(&self, label: Option<usize>) -> Result<()> {
        match label {
            Some(l) if l >= self.classes.len() => Err(Error::LabelOutOfRange {
                label: l,
                classes: self.classes.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn set_label(&mut self, id: &str, label: Option<usize>) -> Result<()> {
        self.check_label(label)?;
        self.node_mut(id)?.label = label;
        Ok(())
    }

    /// Removes a node together with its incident edges and feature entries.
    pub fn remove_node(&mut self, id: &str) -> Result<NodeData> {
        let data = self
            .nodes
            .remove(id)
            .ok_or_else(|| Error::Integrity(format!("node `{id}` does not exist")))?;
        self.edges.retain(|(a, b)| a != id && b != id);
        Ok(data)
    }

    fn node_mut(&mut self, id: &str) -> Result<&mut NodeData> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| Error::Integrity(format!("node `{id}` does not exist")))
    }

    /// Adds an undirected edge. Self-loops and duplicates are integrity errors.
    pub fn add_edge(&mut self, u: &str, v: &str) -> Result<()> {
        if u == v {
            return Err(Error::Integrity(format!("self-loop on `{u}`")));
        }
        for x in [u, v] {
            if !self.nodes.contains_key(x) {
                return Err(Error::Integrity(format!("edge endpoint `{x}` does not exist")));
            }
        }
        if !self.edges.insert(canonical(u, v)) {
            return Err(Error::Integrity(format!("edge ({u}, {v}) already exists")));
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, u: &str, v: &str) -> Result<()> {
        if !self.edges.remove(&canonical(u, v)) {
            return Err(Error::Integrity(format!("edge ({u}, {v}) does not exist")));
        }
        Ok(())
    }

    /// Stores `x_v[f] = value`. A zero value stores nothing.
    pub fn set_feature(&mut self, node: &str, feature: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("non-finite value for ({node}, {feature})")));
        }
        let n = self.node_mut(node)?;
        if value == 0.0 {
            n.features.remove(feature);
        } else {
            n.features.insert(feature.to_string(), value);
        }
        Ok(())
    }

    pub fn remove_feature(&mut self, node: &str, feature: &str) -> Result<f64> {
        self.node_mut(node)?
            .features
            .remove(feature)
            .ok_or_else(|| Error::Integrity(format!("feature `{feature}` absent at `{node}`")))
    }

    /// Graph neighbours of `id` in sorted order.
    pub fn neighbors(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter_map(|(a, b)| {
                if a == id {
                    Some(b.as_str())
                } else if b == id {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Applies `value ← a·value + b` to every stored entry; results equal to zero are dropped.
    pub fn translate_features(&self, a: f64, b: f64) -> HeteroGraph {
        let mut g = self.clone();
        for n in g.nodes.values_mut() {
            for x in n.features.values_mut() {
                *x = a * *x + b;
            }
            n.features.retain(|_, x| *x != 0.0);
        }
        g
    }

    /// Deletes each `(node, feature)` entry independently with probability `p`.
    ///
    /// Returns a copy; nodes, edges and labels are untouched.
    pub fn apply_missing_mask(&self, p: f64, seed: u64) -> Result<HeteroGraph> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("missing rate {p} outside [0, 1]")));
        }
        let mut rng = crate::rng_for(seed, "mask");
        let mut g = self.clone();
        for n in g.nodes.values_mut() {
            n.features.retain(|_, _| rng.gen::<f64>() >= p);
        }
        Ok(g)
    }
}
