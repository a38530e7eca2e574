use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{split_sizes, AllotropicGraph, HeteroGraph};
use crate::tensor::{Tape, Var};

/// Node-index pair with `u < v`.
pub type Pair = (usize, usize);

/// Dot-product logits `h_u · h_v` for each pair, as `[m, 1]`.
pub fn link_score(tape: &mut Tape, h: Var, pairs: &[Pair]) -> Result<Var> {
    let (us, vs): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let a = tape.gather_rows(h, us)?;
    let b = tape.gather_rows(h, vs)?;
    tape.row_dot(a, b)
}

fn num_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `count` distinct uniformly drawn non-edges of `alt`, none in `exclude`.
///
/// Returned in draw order.
pub fn negative_sample(
    alt: &AllotropicGraph,
    count: usize,
    exclude: &BTreeSet<Pair>,
    rng: &mut impl Rng,
) -> Result<Vec<Pair>> {
    let n = alt.num_graph_nodes();
    let edges: BTreeSet<Pair> = alt.edges().iter().copied().collect();
    let taken = edges.union(exclude).count();
    let free = num_pairs(n).saturating_sub(taken);
    if count > free {
        return Err(Error::invalid(format!(
            "asked for {count} non-edges, only {free} exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    // Enumerate when the request is a large share of the candidates.
    if count * 2 > free {
        let mut all: Vec<Pair> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|p| !edges.contains(p) && !exclude.contains(p))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a == b {
            continue;
        }
        let p = (a.min(b), a.max(b));
        if edges.contains(&p) || exclude.contains(&p) || !seen.insert(p) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

/// Positive and negative pairs for link prediction, in node indices of the full graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSplit {
    pub train_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
}

impl LinkSplit {
    /// Shuffles edges into train/val/test by `fractions` and draws
    /// `neg_ratio` disjoint negatives per positive for each part.
    pub fn new(
        alt: &AllotropicGraph,
        fractions: (f64, f64, f64),
        neg_ratio: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if neg_ratio == 0 {
            return Err(Error::invalid("negative ratio must be at least 1"));
        }
        let mut edges = alt.edges().to_vec();
        let (n_train, n_val, n_test) = split_sizes(edges.len(), fractions)?;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::EmptyPartition(format!(
                "{} edges give an empty link split ({n_train}/{n_val}/{n_test})",
                edges.len()
            )));
        }
        edges.shuffle(rng);
        let test_pos = edges[n_train + n_val..n_train + n_val + n_test].to_vec();
        let val_pos = edges[n_train..n_train + n_val].to_vec();
        edges.truncate(n_train);
        let (a, b) = (n_train * neg_ratio, (n_train + n_val) * neg_ratio);
        let negs = negative_sample(alt, (n_train + n_val + n_test) * neg_ratio, &BTreeSet::new(), rng)?;
        Ok(LinkSplit {
            train_neg: negs[..a].to_vec(),
            val_neg: negs[a..b].to_vec(),
            test_neg: negs[b..].to_vec(),
            train_pos: edges,
            val_pos,
            test_pos,
        })
    }

    /// `g` without the validation and test edges.
    pub fn training_graph(&self, g: &HeteroGraph, alt: &AllotropicGraph) -> Result<HeteroGraph> {
        let ids = alt.graph_node_ids();
        let mut out = g.clone();
        for &(u, v) in self.val_pos.iter().chain(&self.test_pos) {
            out.remove_edge(&ids[u], &ids[v])?;
        }
        Ok(out)
    }
}

/// Pairs and 0/1 targets, positives first.
pub fn labelled_pairs(pos: &[Pair], neg: &[Pair]) -> (Vec<Pair>, Vec<f64>) {
    let pairs = pos.iter().chain(neg).copied().collect();
    let targets = std::iter::repeat_n(1.0, pos.len())
        .chain(std::iter::repeat_n(0.0, neg.len()))
        .collect();
    (pairs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> AllotropicGraph {
        let mut g = HeteroGraph::default();
        for v in 0..n {
            g.add_node(format!("{v:03}"), None).unwrap();
        }
        for &(u, v) in edges {
            g.add_edge(&format!("{u:03}"), &format!("{v:03}")).unwrap();
        }
        g.to_allotropic()
    }

    #[test]
    fn scores_are_dot_products() {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap());
        let s = link_score(&mut tape, h, &[(0, 1), (0, 2), (2, 0)]).unwrap();
        assert_eq!(tape.value(s).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let alt = graph(3, &[(0, 1), (0, 2), (1, 2)]);
        let mut rng = crate::rng_for(0, "t");
        assert!(negative_sample(&alt, 1, &BTreeSet::new(), &mut rng).is_err());
        assert!(negative_sample(&alt, 0, &BTreeSet::new(), &mut rng).unwrap().is_empty());
    }

    #[test]
    fn single_non_edge_is_found() {
        let alt = graph(3, &[(0, 1), (1, 2)]);
        let mut rng = crate::rng_for(0, "t");
        assert_eq!(
            negative_sample(&alt, 1, &BTreeSet::new(), &mut rng).unwrap(),
            vec![(0, 2)]
        );
    }

    #[test]
    fn negatives_are_uniform_and_deterministic() {
        // Path on 20 nodes: 171 non-edges. Draw 5 per trial, 2000 trials.
        let alt = graph(20, &(0..19).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let mut counts = std::collections::BTreeMap::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let s = negative_sample(&alt, 5, &BTreeSet::new(), &mut rng).unwrap();
            assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 5);
            for p in s {
                assert!(p.1 > p.0 + 1);
                *counts.entry(p).or_insert(0usize) += 1;
            }
        }
        assert_eq!(counts.len(), 171);
        let expect: f64 = 2000.0 * 5.0 / 171.0;
        let sigma = (expect * (1.0 - 5.0 / 171.0)).sqrt();
        let worst = counts
            .values()
            .map(|&c| (c as f64 - expect).abs() / sigma)
            .fold(0.0, f64::max);
        // Max of 171 roughly normal deviates; 4.5σ leaves ample room.
        assert!(worst < 4.5, "{worst}");
        let a = negative_sample(&alt, 7, &BTreeSet::new(), &mut crate::rng_for(1, "n")).unwrap();
        let b = negative_sample(&alt, 7, &BTreeSet::new(), &mut crate::rng_for(1, "n")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_parts_are_disjoint() {
        let mut rng = crate::rng_for(5, "t");
        let edges: Vec<_> = (0..30)
            .flat_map(|i| [(i, (i + 1) % 30), (i, (i + 7) % 30)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        let alt = graph(30, &edges);
        let s = LinkSplit::new(&alt, (0.6, 0.2, 0.2), 1, &mut rng).unwrap();
        assert_eq!((s.train_pos.len(), s.val_pos.len(), s.test_pos.len()), (36, 12, 12));
        assert_eq!(s.train_neg.len(), 36);
        let all: BTreeSet<Pair> = [
            &s.train_pos,
            &s.val_pos,
            &s.test_pos,
            &s.train_neg,
            &s.val_neg,
            &s.test_neg,
        ]
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect();
        assert_eq!(all.len(), 120);
        let s = LinkSplit::new(&alt, (0.6, 0.2, 0.2), 2, &mut rng).unwrap();
        assert_eq!((s.train_neg.len(), s.val_neg.len(), s.test_neg.len()), (72, 24, 24));
    }
}
