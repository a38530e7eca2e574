//! The path A-B-C with fixed parameters and its scalar reference outputs.

use grafenne::graph::HeteroGraph;
use grafenne::tensor::{ParamSet, Tensor};

// Reference values from an independent scalar evaluation of one layer on the
// path A-B-C, with every parameter filled by `wval`.
pub const PHASE1: [[f64; 2]; 3] = [
    [-1.4941632301420045, -1.241801016967641],
    [-1.5449523200000002, -1.283392],
    [-1.3024, -1.0848],
];
pub const PHASE2: [[f64; 2]; 3] = [
    [2.3633425891775435, 1.918197903808772],
    [2.346174371851229, 1.9149802563668425],
    [2.1582783488, 1.7410348032],
];
pub const PHASE3: [[f64; 2]; 2] = [
    [-1.0844861352973223, -0.8680091319568979],
    [-0.8917883949639012, -0.7065946731537467],
];

pub fn wval(name: &str, i: usize) -> f64 {
    let s: usize = name.bytes().map(usize::from).sum();
    (((s * 37 + i * 101) % 97) as f64 - 48.0) / 50.0
}

pub fn fill_by_name(params: &mut ParamSet) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.get(id).name.clone();
        for (i, x) in params.value_mut(id).data_mut().iter_mut().enumerate() {
            *x = wval(&name, i);
        }
    }
}

pub fn path_graph() -> HeteroGraph {
    let mut g = HeteroGraph::default();
    for v in ["A", "B", "C"] {
        g.add_node(v, None).unwrap();
    }
    g.add_edge("A", "B").unwrap();
    g.add_edge("B", "C").unwrap();
    g.set_feature("A", "f1", 1.0).unwrap();
    g.set_feature("A", "f2", 2.0).unwrap();
    g.set_feature("B", "f2", 0.5).unwrap();
    g
}

/// Largest absolute deviation from `want`; infinite on a shape mismatch.
pub fn max_dev<const N: usize>(t: &Tensor, want: &[[f64; 2]; N]) -> f64 {
    if t.shape() != [N, 2] {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            worst = worst.max((t.row(i)[j] - w).abs());
        }
    }
    worst
}
