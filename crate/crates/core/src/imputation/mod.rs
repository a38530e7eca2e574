//! Missing-feature baselines: dense imputation followed by a standard GNN,
//! or imputation used as a pre-processing step for the feature-node model.

mod gnn;

pub use gnn::DenseGnn;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::HeteroGraph;
use crate::tensor::Tensor;

/// Imputed values smaller than this are dropped when re-sparsifying.
pub const SPARSE_EPSILON: f64 = 1e-8;

pub const DEFAULT_FP_ITERATIONS: usize = 40;

/// A `|V| × |F|` matrix with a mask of which entries were observed.
///
/// Rows follow sorted node ids and columns sorted feature ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFeatures {
    pub nodes: Vec<String>,
    pub features: Vec<String>,
    /// `[|V|, |F|]`
    pub values: Tensor,
    /// Row-major, same layout as `values`.
    pub observed: Vec<bool>,
}

impl DenseFeatures {
    /// Expands the stored maps: an entry is observed exactly when it is stored.
    pub fn from_graph(g: &HeteroGraph) -> Self {
        let features: Vec<String> = g.feature_ids().into_iter().map(String::from).collect();
        let col: BTreeMap<&str, usize> = features.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        let nodes: Vec<String> = g.node_ids().cloned().collect();
        let (n, f) = (nodes.len(), features.len());
        let mut values = vec![0.0; n * f];
        let mut observed = vec![false; n * f];
        for (r, (_, data)) in g.nodes().enumerate() {
            for (name, &x) in &data.features {
                values[r * f + col[name.as_str()]] = x;
                observed[r * f + col[name.as_str()]] = true;
            }
        }
        DenseFeatures {
            values: Tensor::matrix(n, f, values).expect("dense shape"),
            nodes,
            features,
            observed,
        }
    }

    /// Hides every entry of the full `|V| × |F|` matrix, zeros included,
    /// independently with probability `p`. Unhidden zeros count as observed.
    pub fn with_missing(g: &HeteroGraph, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("missing rate {p} outside [0, 1]")));
        }
        let mut d = Self::from_graph(g);
        let mut rng = crate::rng_for(seed, "dense-mask");
        let data = d.values.data_mut();
        for (x, seen) in data.iter_mut().zip(d.observed.iter_mut()) {
            *seen = rng.gen::<f64>() >= p;
            if !*seen {
                *x = 0.0;
            }
        }
        Ok(d)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn value(&self, node: usize, feature: usize) -> f64 {
        self.values.data()[node * self.features.len() + feature]
    }

    pub fn is_observed(&self, node: usize, feature: usize) -> bool {
        self.observed[node * self.features.len() + feature]
    }

    pub fn num_missing(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    /// Copy of `g` whose feature maps are the entries of `self` with
    /// `|value| ≥ SPARSE_EPSILON`.
    pub fn to_graph(&self, g: &HeteroGraph) -> Result<HeteroGraph> {
        if g.node_ids().ne(self.nodes.iter()) {
            return Err(Error::invalid("dense rows do not match the graph's nodes"));
        }
        let mut out = HeteroGraph::with_classes(g.classes().to_vec());
        let f = self.features.len();
        for (r, (id, data)) in g.nodes().enumerate() {
            out.add_node(id.clone(), data.label)?;
            for (c, name) in self.features.iter().enumerate() {
                let x = self.values.data()[r * f + c];
                if x.abs() >= SPARSE_EPSILON {
                    out.set_feature(id, name, x)?;
                }
            }
        }
        for (u, v) in g.edges() {
            out.add_edge(u, v)?;
        }
        Ok(out)
    }
}

/// Row-index adjacency lists in sorted node order.
fn adjacency(g: &HeteroGraph) -> Vec<Vec<usize>> {
    let index: BTreeMap<&String, usize> = g.node_ids().enumerate().map(|(i, v)| (v, i)).collect();
    let mut lists = vec![Vec::new(); index.len()];
    for (u, v) in g.edges() {
        let (a, b) = (index[u], index[v]);
        lists[a].push(b);
        lists[b].push(a);
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

fn check_rows(g: &HeteroGraph, x: &DenseFeatures) -> Result<()> {
    if g.num_nodes() != x.num_nodes() || g.node_ids().ne(x.nodes.iter()) {
        return Err(Error::invalid("dense rows do not match the graph's nodes"));
    }
    Ok(())
}

/// Missing entries take `sentinel`; observed entries are copied.
pub fn special_label(x: &DenseFeatures, sentinel: f64) -> DenseFeatures {
    let mut out = x.clone();
    for (v, &seen) in out.values.data_mut().iter_mut().zip(&x.observed) {
        if !seen {
            *v = sentinel;
        }
    }
    out
}

/// Missing `(v, f)` takes the mean of observed `f` over `v`'s neighbours, then
/// the global observed mean of `f`, then 0.
pub fn neighborhood_mean(g: &HeteroGraph, x: &DenseFeatures) -> Result<DenseFeatures> {
    check_rows(g, x)?;
    let adj = adjacency(g);
    let f = x.num_features();
    let mut global = vec![None; f];
    for (c, slot) in global.iter_mut().enumerate() {
        let (mut sum, mut count) = (0.0, 0usize);
        for r in 0..x.num_nodes() {
            if x.is_observed(r, c) {
                sum += x.value(r, c);
                count += 1;
            }
        }
        if count > 0 {
            *slot = Some(sum / count as f64);
        }
    }
    let mut out = x.clone();
    let data = out.values.data_mut();
    for (r, nbrs) in adj.iter().enumerate() {
        for c in 0..f {
            if x.is_observed(r, c) {
                continue;
            }
            let (mut sum, mut count) = (0.0, 0usize);
            for &u in nbrs {
                if x.is_observed(u, c) {
                    sum += x.value(u, c);
                    count += 1;
                }
            }
            data[r * f + c] = if count > 0 {
                sum / count as f64
            } else {
                global[c].unwrap_or(0.0)
            };
        }
    }
    Ok(out)
}

/// Normalisation of the diffusion operator used by [`feature_propagation`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Propagation {
    /// `D^{-1/2} A D^{-1/2}`.
    #[default]
    Symmetric,
    /// `D^{-1} A`: each step averages neighbours, so values stay within the
    /// observed range of their column.
    RandomWalk,
}

/// Diffuses observed values over graph edges, resetting observed entries after
/// every step. Missing entries start at 0; isolated nodes keep 0.
pub fn feature_propagation(
    g: &HeteroGraph,
    x: &DenseFeatures,
    iterations: usize,
    norm: Propagation,
    exec: Execution,
) -> Result<DenseFeatures> {
    check_rows(g, x)?;
    if iterations == 0 {
        return Err(Error::invalid("feature propagation needs at least one iteration"));
    }
    let adj = adjacency(g);
    let f = x.num_features();
    let deg: Vec<f64> = adj.iter().map(|l| l.len() as f64).collect();
    let mut cur = x.values.data().to_vec();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..iterations {
        let prev = &cur;
        exec.for_each_chunk(&mut next, f.max(1), |r, row| {
            row.iter_mut().for_each(|v| *v = 0.0);
            for &u in &adj[r] {
                let w = match norm {
                    Propagation::Symmetric => 1.0 / (deg[r] * deg[u]).sqrt(),
                    Propagation::RandomWalk => 1.0 / deg[r],
                };
                for (c, v) in row.iter_mut().enumerate() {
                    *v += w * prev[u * f + c];
                }
            }
            for (c, v) in row.iter_mut().enumerate() {
                if x.observed[r * f + c] {
                    *v = prev[r * f + c];
                }
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    let mut out = x.clone();
    out.values.data_mut().copy_from_slice(&cur);
    Ok(out)
}

/// Imputation used ahead of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Imputer {
    SpecialLabel(f64),
    NeighborhoodMean,
    FeaturePropagation { iterations: usize },
}

impl Imputer {
    pub fn apply(&self, g: &HeteroGraph, x: &DenseFeatures, exec: Execution) -> Result<DenseFeatures> {
        match *self {
            Imputer::SpecialLabel(s) => Ok(special_label(x, s)),
            Imputer::NeighborhoodMean => neighborhood_mean(g, x),
            Imputer::FeaturePropagation { iterations } => {
                feature_propagation(g, x, iterations, Propagation::Symmetric, exec)
            }
        }
    }
}

impl fmt::Display for Imputer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imputer::SpecialLabel(_) => f.write_str("sl"),
            Imputer::NeighborhoodMean => f.write_str("nm"),
            Imputer::FeaturePropagation { .. } => f.write_str("fp"),
        }
    }
}

impl FromStr for Imputer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(Imputer::SpecialLabel(0.0)),
            "nm" => Ok(Imputer::NeighborhoodMean),
            "fp" => Ok(Imputer::FeaturePropagation {
                iterations: DEFAULT_FP_ITERATIONS,
            }),
            _ => Err(Error::invalid(format!("unknown imputation `{s}`"))),
        }
    }
}

/// Imputes, then re-sparsifies into a graph for the feature-node model.
pub fn impute_then_grafenne(
    g: &HeteroGraph,
    x: &DenseFeatures,
    method: Imputer,
    exec: Execution,
) -> Result<HeteroGraph> {
    method.apply(g, x, exec)?.to_graph(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> HeteroGraph {
        let mut g = HeteroGraph::default();
        for v in ["a", "b", "c"] {
            g.add_node(v, None).unwrap();
        }
        g.add_edge("a", "b").unwrap();
        g.set_feature("a", "x", 2.0).unwrap();
        g.set_feature("b", "x", 4.0).unwrap();
        g.set_feature("b", "y", 1.0).unwrap();
        g
    }

    #[test]
    fn expansion_matches_brute_force() {
        let d = DenseFeatures::from_graph(&toy());
        assert_eq!(d.features, ["x", "y"]);
        assert_eq!(d.values.data(), &[2.0, 0.0, 4.0, 1.0, 0.0, 0.0]);
        assert_eq!(d.observed, [true, false, true, true, false, false]);
        let s = special_label(&d, -1.0);
        assert_eq!(s.values.data(), &[2.0, -1.0, 4.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn special_label_extremes() {
        let mut full = DenseFeatures::from_graph(&toy());
        full.observed.iter_mut().for_each(|o| *o = true);
        assert_eq!(special_label(&full, 9.0), full);
        let none = DenseFeatures::with_missing(&toy(), 1.0, 0).unwrap();
        assert!(special_label(&none, 0.5).values.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn neighbour_mean_and_fallbacks() {
        let mut g = HeteroGraph::default();
        for v in ["m", "n1", "n2", "z"] {
            g.add_node(v, None).unwrap();
        }
        g.add_edge("m", "n1").unwrap();
        g.add_edge("m", "n2").unwrap();
        g.set_feature("n1", "f", 2.0).unwrap();
        g.set_feature("n2", "f", 4.0).unwrap();
        let d = neighborhood_mean(&g, &DenseFeatures::from_graph(&g)).unwrap();
        // m: neighbours hold 2 and 4; z is isolated and takes the global mean.
        assert_eq!(d.values.data(), &[3.0, 2.0, 4.0, 3.0]);
    }

    #[test]
    fn dense_mask_extremes() {
        let g = toy();
        let d = DenseFeatures::with_missing(&g, 0.0, 1).unwrap();
        assert_eq!(d.num_missing(), 0);
        assert_eq!(d.to_graph(&g).unwrap(), g);
        assert!(DenseFeatures::with_missing(&g, 1.5, 1).is_err());
    }

    #[test]
    fn propagation_on_two_node_path_reaches_the_observed_value() {
        let mut g = HeteroGraph::default();
        g.add_node("a", None).unwrap();
        g.add_node("b", None).unwrap();
        g.add_edge("a", "b").unwrap();
        g.set_feature("a", "f", 0.7).unwrap();
        for norm in [Propagation::Symmetric, Propagation::RandomWalk] {
            let d = feature_propagation(&g, &DenseFeatures::from_graph(&g), 3, norm, Execution::Sequential).unwrap();
            assert_eq!(d.values.data(), &[0.7, 0.7]);
        }
    }
}
