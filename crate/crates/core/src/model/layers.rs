use rand::Rng;

use super::config::Backend;
use super::structure::{EdgeList, GraphAdjacency, MessageStructure};
use crate::error::Result;
use crate::tensor::{glorot_uniform, Activation, Mlp, ParamId, ParamSet, Tape, Tensor, Var};

// Row-vector convention throughout: a node state is a row `h`, and a weight
// `W` stored as `[in, out]` acts as `h·W`.

fn weight(params: &mut ParamSet, rng: &mut impl Rng, name: String, rows: usize, cols: usize) -> Result<ParamId> {
    params.add(name, glorot_uniform(rng, &[rows, cols], rows, cols))
}

fn project(tape: &mut Tape, params: &ParamSet, h: Var, w: ParamId) -> Result<Var> {
    let w = tape.param(params, w);
    tape.matmul(h, w)
}

/// Output of an attention aggregation: the summed messages and the weights used.
pub struct Attended {
    pub aggregate: Var,
    /// `[E, 1]` attention weights, absent when there are no messages.
    pub alpha: Option<Var>,
}

/// `Σ_u α_vu · values_u` with `α = softmax_v(w_attᵀ LeakyReLU(target_v ∥ source_u ∥ w_edge·e_uv))`.
///
/// Targets with no incoming messages receive a zero row.
#[allow(clippy::too_many_arguments)]
fn attend(
    tape: &mut Tape,
    params: &ParamSet,
    edges: &EdgeList,
    target: Var,
    source: Var,
    w_edge: ParamId,
    w_att: ParamId,
    values: Var,
    slope: f64,
) -> Result<Attended> {
    let d = tape.value(values).cols();
    if edges.is_empty() {
        return Ok(Attended {
            aggregate: tape.constant(Tensor::zeros(&[edges.targets, d])),
            alpha: None,
        });
    }
    let t = tape.gather_rows(target, edges.dst.clone())?;
    let s = tape.gather_rows(source, edges.src.clone())?;
    let e = tape.constant(edges.weight.clone());
    let we = tape.param(params, w_edge);
    let c = tape.matmul(e, we)?;
    let cat = tape.concat(&[t, s, c], 1)?;
    let m = tape.leaky_relu(cat, slope);
    let wa = tape.param(params, w_att);
    let score = tape.matmul(m, wa)?;
    let alpha = tape.segment_softmax(score, edges.segments.clone())?;
    let v = tape.gather_rows(values, edges.src.clone())?;
    let msg = tape.row_scale(v, alpha)?;
    let aggregate = tape.scatter_add_rows(msg, edges.dst.clone(), edges.targets)?;
    Ok(Attended {
        aggregate,
        alpha: Some(alpha),
    })
}

/// `Σ_{u ∈ N(v)} weight_vu · h_u`, zero for empty neighbourhoods.
fn neighbor_sum(tape: &mut Tape, edges: &EdgeList, h: Var) -> Result<Var> {
    let d = tape.value(h).cols();
    if edges.is_empty() {
        return Ok(tape.constant(Tensor::zeros(&[edges.targets, d])));
    }
    let mut g = tape.gather_rows(h, edges.src.clone())?;
    if edges.weight.data().iter().any(|&w| w != 1.0) {
        let w = tape.constant(edges.weight.clone());
        g = tape.row_scale(g, w)?;
    }
    tape.scatter_add_rows(g, edges.dst.clone(), edges.targets)
}

/// Mean over `N(v)` of (weighted) neighbour states, zero for empty neighbourhoods.
pub(crate) fn neighbor_mean(tape: &mut Tape, edges: &EdgeList, h: Var) -> Result<Var> {
    let s = neighbor_sum(tape, edges, h)?;
    let inv = tape.constant(edges.inverse_degree());
    tape.row_scale(s, inv)
}

/// One graph-node aggregation layer (GraphSAGE, GAT or GIN).
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConv {
    pub backend: Backend,
    pub in_dim: usize,
    pub out_dim: usize,
    /// SAGE: `[2·in, out]`; GAT: target projection `[in, out]`.
    pub w13: Option<ParamId>,
    /// GAT source projection.
    pub w14: Option<ParamId>,
    /// GAT attention vector `[2·out, 1]`.
    pub w15: Option<ParamId>,
    /// GAT value projection.
    pub w16: Option<ParamId>,
    pub gin: Option<Mlp>,
    pub epsilon: f64,
    pub slope: f64,
}

impl GraphConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        backend: Backend,
        in_dim: usize,
        out_dim: usize,
        slope: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let mut c = GraphConv {
            backend,
            in_dim,
            out_dim,
            w13: None,
            w14: None,
            w15: None,
            w16: None,
            gin: None,
            epsilon,
            slope,
        };
        match backend {
            Backend::Sage => {
                c.w13 = Some(weight(params, rng, format!("{name}.w13"), 2 * in_dim, out_dim)?);
            }
            Backend::Gat => {
                c.w13 = Some(weight(params, rng, format!("{name}.w13"), in_dim, out_dim)?);
                c.w14 = Some(weight(params, rng, format!("{name}.w14"), in_dim, out_dim)?);
                c.w15 = Some(weight(params, rng, format!("{name}.w15"), 2 * out_dim, 1)?);
                c.w16 = Some(weight(params, rng, format!("{name}.w16"), in_dim, out_dim)?);
            }
            Backend::Gin => {
                c.gin = Some(Mlp::new(
                    params,
                    rng,
                    &format!("{name}.gin"),
                    &[in_dim, out_dim, out_dim],
                    Activation::LeakyRelu(slope),
                )?);
            }
        }
        Ok(c)
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, h: Var, adj: &GraphAdjacency) -> Result<Var> {
        match self.backend {
            Backend::Sage => {
                let mean = neighbor_mean(tape, &adj.neighbors, h)?;
                let cat = tape.concat(&[h, mean], 1)?;
                let z = project(tape, params, cat, self.w13.expect("sage weight"))?;
                Ok(tape.relu(z))
            }
            Backend::Gat => {
                let edges = &adj.with_self;
                let a = project(tape, params, h, self.w13.expect("gat weight"))?;
                let b = project(tape, params, h, self.w14.expect("gat weight"))?;
                let v = project(tape, params, h, self.w16.expect("gat weight"))?;
                let ga = tape.gather_rows(a, edges.dst.clone())?;
                let gb = tape.gather_rows(b, edges.src.clone())?;
                let cat = tape.concat(&[ga, gb], 1)?;
                let m = tape.leaky_relu(cat, self.slope);
                let score = project(tape, params, m, self.w15.expect("gat weight"))?;
                let alpha = tape.segment_softmax(score, edges.segments.clone())?;
                let gv = tape.gather_rows(v, edges.src.clone())?;
                let msg = tape.row_scale(gv, alpha)?;
                tape.scatter_add_rows(msg, edges.dst.clone(), edges.targets)
            }
            Backend::Gin => {
                let sum = neighbor_sum(tape, &adj.neighbors, h)?;
                let own = tape.scale(h, 1.0 + self.epsilon);
                let z = tape.add(own, sum)?;
                self.gin.as_ref().expect("gin mlp").forward(tape, params, z)
            }
        }
    }
}

/// One three-phase layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GrafenneLayer {
    pub dim: usize,
    pub slope: f64,
    pub w1: ParamId,
    pub w2: ParamId,
    /// `[1, d]`: edge-weight channel of feature → graph messages.
    pub w3: ParamId,
    /// `[3d, 1]`: feature → graph attention vector.
    pub w4: ParamId,
    pub w5: ParamId,
    pub w6: ParamId,
    pub w7: ParamId,
    pub w8: ParamId,
    /// `[1, d]`: edge-weight channel of graph → feature messages.
    pub w9: ParamId,
    /// `[3d, 1]`: graph → feature attention vector.
    pub w10: ParamId,
    pub w11: ParamId,
    pub w12: ParamId,
    pub combine_graph: Mlp,
    pub combine_features: Mlp,
    pub phase2: GraphConv,
}

impl GrafenneLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        backend: Backend,
        slope: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let d = dim;
        let mut w =
            |params: &mut ParamSet, i: usize, r: usize, c: usize| weight(params, rng, format!("{name}.w{i}"), r, c);
        let w1 = w(params, 1, d, d)?;
        let w2 = w(params, 2, d, d)?;
        let w3 = w(params, 3, 1, d)?;
        let w4 = w(params, 4, 3 * d, 1)?;
        let w5 = w(params, 5, d, d)?;
        let w6 = w(params, 6, d, d)?;
        let w7 = w(params, 7, d, d)?;
        let w8 = w(params, 8, d, d)?;
        let w9 = w(params, 9, 1, d)?;
        let w10 = w(params, 10, 3 * d, 1)?;
        let w11 = w(params, 11, d, d)?;
        let w12 = w(params, 12, d, d)?;
        let act = Activation::LeakyRelu(slope);
        let combine_graph = Mlp::new(params, rng, &format!("{name}.combine_graph"), &[2 * d, d, d], act)?;
        let combine_features = Mlp::new(params, rng, &format!("{name}.combine_features"), &[2 * d, d, d], act)?;
        let phase2 = GraphConv::new(params, rng, &format!("{name}.phase2"), backend, d, d, slope, epsilon)?;
        Ok(GrafenneLayer {
            dim,
            slope,
            w1,
            w2,
            w3,
            w4,
            w5,
            w6,
            w7,
            w8,
            w9,
            w10,
            w11,
            w12,
            combine_graph,
            combine_features,
            phase2,
        })
    }

    /// Feature nodes → graph nodes. Returns the new graph-node states and the attention weights.
    pub fn phase1(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        s: &MessageStructure,
        h_graph: Var,
        h_feat: Var,
    ) -> Result<(Var, Option<Var>)> {
        let target = project(tape, params, h_graph, self.w1)?;
        let source = project(tape, params, h_feat, self.w2)?;
        let values = project(tape, params, h_feat, self.w6)?;
        let att = attend(
            tape,
            params,
            &s.to_graph,
            target,
            source,
            self.w3,
            self.w4,
            values,
            self.slope,
        )?;
        let own = project(tape, params, h_graph, self.w5)?;
        let cat = tape.concat(&[own, att.aggregate], 1)?;
        Ok((self.combine_graph.forward(tape, params, cat)?, att.alpha))
    }

    /// Graph nodes ↔ graph nodes, on this layer's first-phase output.
    pub fn phase2(&self, tape: &mut Tape, params: &ParamSet, s: &MessageStructure, h_graph: Var) -> Result<Var> {
        self.phase2.forward(tape, params, h_graph, &s.graph)
    }

    /// Graph nodes → feature nodes, from the previous feature states and the fresh graph states.
    pub fn phase3(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        s: &MessageStructure,
        h_feat: Var,
        h_graph: Var,
    ) -> Result<(Var, Option<Var>)> {
        let target = project(tape, params, h_feat, self.w7)?;
        let source = project(tape, params, h_graph, self.w8)?;
        let values = project(tape, params, h_graph, self.w12)?;
        let att = attend(
            tape,
            params,
            &s.to_features,
            target,
            source,
            self.w9,
            self.w10,
            values,
            self.slope,
        )?;
        let own = project(tape, params, h_feat, self.w11)?;
        let cat = tape.concat(&[own, att.aggregate], 1)?;
        Ok((self.combine_features.forward(tape, params, cat)?, att.alpha))
    }
}
