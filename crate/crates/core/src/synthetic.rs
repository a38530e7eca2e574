//! Seeded synthetic graphs and streams for tests, pilots and the toy dataset.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{DeltaOp, HeteroGraph, StreamDelta};

/// Parameters of [`planted_partition`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub nodes: usize,
    pub classes: usize,
    /// Features tied to each class.
    pub class_features: usize,
    /// Features unrelated to the class.
    pub noise_features: usize,
    /// Chance a node carries each feature of its own class.
    pub p_own: f64,
    /// Chance a node carries any other feature.
    pub p_other: f64,
    /// Expected same-class and cross-class degree.
    pub deg_in: f64,
    pub deg_out: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            nodes: 500,
            classes: 5,
            class_features: 4,
            noise_features: 10,
            p_own: 0.4,
            p_other: 0.08,
            deg_in: 4.0,
            deg_out: 1.0,
        }
    }
}

/// Node id `n{index}`, zero padded so lexicographic order is index order.
pub fn node_id(v: usize) -> String {
    format!("n{v:04}")
}

/// Stochastic block graph with class-correlated binary features.
///
/// Node `v` has class `v % classes`; values are 1.
pub fn planted_partition(cfg: &PlantedConfig, seed: u64) -> Result<HeteroGraph> {
    if cfg.classes == 0 || cfg.nodes < cfg.classes {
        return Err(Error::invalid("need at least one node per class"));
    }
    let mut rng = crate::rng_for(seed, "planted");
    let mut g = HeteroGraph::with_classes((0..cfg.classes).map(|c| format!("c{c}")).collect());
    let per_class = cfg.nodes as f64 / cfg.classes as f64;
    let p_in = (cfg.deg_in / (per_class - 1.0).max(1.0)).min(1.0);
    let p_out = (cfg.deg_out / (cfg.nodes as f64 - per_class).max(1.0)).min(1.0);
    for v in 0..cfg.nodes {
        let c = v % cfg.classes;
        let id = node_id(v);
        g.add_node(&id, Some(c))?;
        for k in 0..cfg.classes * cfg.class_features {
            let p = if k / cfg.class_features == c {
                cfg.p_own
            } else {
                cfg.p_other
            };
            if rng.gen_bool(p) {
                g.set_feature(
                    &id,
                    &format!("c{}_{}", k / cfg.class_features, k % cfg.class_features),
                    1.0,
                )?;
            }
        }
        for k in 0..cfg.noise_features {
            if rng.gen_bool(cfg.p_other) {
                g.set_feature(&id, &format!("z{k}"), 1.0)?;
            }
        }
    }
    for u in 0..cfg.nodes {
        for v in u + 1..cfg.nodes {
            let p = if u % cfg.classes == v % cfg.classes {
                p_in
            } else {
                p_out
            };
            if rng.gen_bool(p) {
                g.add_edge(&node_id(u), &node_id(v))?;
            }
        }
    }
    Ok(g)
}

/// A stream where step `k` touches `per_step` nodes of class `k % classes`.
///
/// Each touched node gains a feature never seen before (`drift{k}`) and one
/// extra same-class edge, so the affected set is dominated by one class.
pub fn drift_stream(g: &HeteroGraph, steps: usize, per_step: usize, seed: u64) -> Result<Vec<StreamDelta>> {
    let classes = g.num_classes();
    if classes == 0 {
        return Err(Error::invalid("drift stream needs labelled classes"));
    }
    let mut rng = crate::rng_for(seed, "drift");
    let mut current = g.clone();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let c = k % classes;
        let mut members: Vec<String> = current
            .nodes()
            .filter(|(_, n)| n.label == Some(c))
            .map(|(id, _)| id.clone())
            .collect();
        members.shuffle(&mut rng);
        members.truncate(per_step);
        let mut ops = Vec::new();
        let mut added = std::collections::BTreeSet::new();
        for (i, id) in members.iter().enumerate() {
            ops.push(DeltaOp::AddFeature {
                node: id.clone(),
                feature: format!("drift{k}"),
                value: 1.0,
            });
            let other = &members[(i + 1) % members.len()];
            let key = if id < other {
                (id.clone(), other.clone())
            } else {
                (other.clone(), id.clone())
            };
            if other != id && !current.has_edge(id, other) && added.insert(key) {
                ops.push(DeltaOp::AddEdge {
                    u: id.clone(),
                    v: other.clone(),
                });
            }
        }
        let delta = StreamDelta { t: k + 2, ops };
        current = crate::graph::apply_delta(&current, &delta)?.0;
        out.push(delta);
    }
    Ok(out)
}
