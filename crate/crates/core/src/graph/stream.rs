use std::collections::BTreeSet;

use rand::Rng;

use super::{canonical, HeteroGraph};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DeltaOp {
    AddNode { node: String, label: Option<usize> },
    DelNode { node: String },
    AddEdge { u: String, v: String },
    DelEdge { u: String, v: String },
    AddFeature { node: String, feature: String, value: f64 },
    DelFeature { node: String, feature: String },
}

impl DeltaOp {
    fn touched(&self) -> [Option<&str>; 2] {
        match self {
            DeltaOp::AddNode { node, .. }
            | DeltaOp::DelNode { node }
            | DeltaOp::AddFeature { node, .. }
            | DeltaOp::DelFeature { node, .. } => [Some(node), None],
            DeltaOp::AddEdge { u, v } | DeltaOp::DelEdge { u, v } => [Some(u), Some(v)],
        }
    }
}

/// Updates that turn snapshot `t - 1` into snapshot `t`, applied in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamDelta {
    pub t: usize,
    pub ops: Vec<DeltaOp>,
}

impl StreamDelta {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Applies `delta` to a copy of `g`.
///
/// Also returns `ΔV_t`: every surviving node named by an operation, plus the
/// neighbours of deleted nodes (their neighbourhoods changed).
pub fn apply_delta(g: &HeteroGraph, delta: &StreamDelta) -> Result<(HeteroGraph, BTreeSet<String>)> {
    let mut next = g.clone();
    let mut affected = BTreeSet::new();
    for op in &delta.ops {
        for id in op.touched().into_iter().flatten() {
            affected.insert(id.to_string());
        }
        match op {
            DeltaOp::AddNode { node, label } => next.add_node(node.clone(), *label)?,
            DeltaOp::DelNode { node } => {
                for n in next.neighbors(node) {
                    affected.insert(n.to_string());
                }
                next.remove_node(node)?;
            }
            DeltaOp::AddEdge { u, v } => next.add_edge(u, v)?,
            DeltaOp::DelEdge { u, v } => next.remove_edge(u, v)?,
            DeltaOp::AddFeature { node, feature, value } => {
                if *value == 0.0 {
                    return Err(Error::Integrity(format!("zero value added for ({node}, {feature})")));
                }
                if next.node(node).is_some_and(|n| n.features.contains_key(feature)) {
                    return Err(Error::Integrity(format!("feature `{feature}` already at `{node}`")));
                }
                next.set_feature(node, feature, *value)?;
            }
            DeltaOp::DelFeature { node, feature } => {
                next.remove_feature(node, feature)?;
            }
        }
    }
    affected.retain(|id| next.contains_node(id));
    Ok((next, affected))
}

/// Probabilities driving [`generate_stream`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    pub steps: usize,
    pub p_n: f64,
    pub p_f_add: f64,
    pub p_f_del: f64,
    pub p_e_add: f64,
    pub p_e_del: f64,
}

impl StreamConfig {
    /// All probabilities zero.
    pub fn quiet(steps: usize) -> Self {
        StreamConfig {
            steps,
            p_n: 0.0,
            p_f_add: 0.0,
            p_f_del: 0.0,
            p_e_add: 0.0,
            p_e_del: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("stream needs at least one step"));
        }
        let ps = [self.p_n, self.p_f_add, self.p_f_del, self.p_e_add, self.p_e_del];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("stream probabilities outside [0, 1]: {ps:?}")));
        }
        Ok(())
    }
}

/// Simulates `steps` random deltas starting from `g`, with timestamps `2..=steps + 1`.
///
/// Each delta is generated against the snapshot produced by the previous one,
/// so every deletion refers to an element that exists when it is applied.
pub fn generate_stream(g: &HeteroGraph, cfg: &StreamConfig, seed: u64) -> Result<Vec<StreamDelta>> {
    cfg.validate()?;
    let mut rng = crate::rng_for(seed, "stream");
    let binary = g.is_binary();
    let mut current = g.clone();
    let mut out = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut ops = Vec::new();
        let registry: Vec<String> = current.feature_ids().into_iter().map(String::from).collect();
        for (id, data) in current.nodes() {
            if rng.gen::<f64>() >= cfg.p_n {
                continue;
            }
            for f in &registry {
                if data.features.contains_key(f) {
                    if rng.gen::<f64>() < cfg.p_f_del {
                        ops.push(DeltaOp::DelFeature {
                            node: id.clone(),
                            feature: f.clone(),
                        });
                    }
                } else if rng.gen::<f64>() < cfg.p_f_add {
                    let value = if binary { 1.0 } else { 1.0 - rng.gen::<f64>() };
                    ops.push(DeltaOp::AddFeature {
                        node: id.clone(),
                        feature: f.clone(),
                        value,
                    });
                }
            }
        }
        for (u, v) in current.edges() {
            if rng.gen::<f64>() < cfg.p_e_del {
                ops.push(DeltaOp::DelEdge {
                    u: u.clone(),
                    v: v.clone(),
                });
            }
        }
        let expected = current.num_edges() as f64 * cfg.p_e_add;
        let mut k = expected.floor() as usize;
        if rng.gen::<f64>() < expected.fract() {
            k += 1;
        }
        let ids: Vec<&String> = current.node_ids().collect();
        let mut chosen = BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < k && ids.len() >= 2 && attempts < 100 * k {
            attempts += 1;
            let a = ids[rng.gen_range(0..ids.len())];
            let b = ids[rng.gen_range(0..ids.len())];
            if a == b || current.has_edge(a, b) {
                continue;
            }
            if chosen.insert(canonical(a, b)) {
                ops.push(DeltaOp::AddEdge {
                    u: a.clone(),
                    v: b.clone(),
                });
            }
        }
        let delta = StreamDelta { t: step + 2, ops };
        current = apply_delta(&current, &delta)?.0;
        out.push(delta);
    }
    Ok(out)
}
