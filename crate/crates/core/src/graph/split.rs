use rand::seq::SliceRandom;

use super::{AllotropicGraph, HeteroGraph};
use crate::error::{Error, Result};

/// Disjoint train / validation / test node sets, held as external ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    fn indices(alt: &AllotropicGraph, ids: &[String]) -> Vec<usize> {
        ids.iter().filter_map(|id| alt.graph_index(id)).collect()
    }

    /// Train indices in `alt`, skipping nodes that no longer exist.
    pub fn train_indices(&self, alt: &AllotropicGraph) -> Vec<usize> {
        Self::indices(alt, &self.train)
    }

    pub fn val_indices(&self, alt: &AllotropicGraph) -> Vec<usize> {
        Self::indices(alt, &self.val)
    }

    pub fn test_indices(&self, alt: &AllotropicGraph) -> Vec<usize> {
        Self::indices(alt, &self.test)
    }
}

/// Partition sizes for `n` items: floor each part, then the remainder goes to train.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || a + b + c > 1.0 + 1e-9 {
        return Err(Error::invalid(format!("bad split fractions {fractions:?}")));
    }
    let total = ((n as f64) * (a + b + c) + 1e-9).floor().min(n as f64) as usize;
    let val = ((n as f64) * b + 1e-9).floor() as usize;
    let test = ((n as f64) * c + 1e-9).floor() as usize;
    Ok((total.saturating_sub(val + test), val, test))
}

/// Random split of the labelled nodes.
pub fn make_split(g: &HeteroGraph, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let mut ids: Vec<String> = g
        .nodes()
        .filter(|(_, n)| n.label.is_some())
        .map(|(id, _)| id.clone())
        .collect();
    let (tr, va, te) = split_sizes(ids.len(), fractions)?;
    ids.shuffle(&mut crate::rng_for(seed, "split"));
    let mut take = |k: usize| {
        let mut part: Vec<String> = ids.drain(..k).collect();
        part.sort();
        part
    };
    let train = take(tr);
    let val = take(va);
    let test = take(te);
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(n: usize) -> HeteroGraph {
        let mut g = HeteroGraph::with_classes(vec!["c".into()]);
        for i in 0..n {
            g.add_node(format!("{i}"), Some(0)).unwrap();
        }
        g.add_node("unlabelled", None).unwrap();
        g
    }

    #[test]
    fn sizes_follow_floor_rule() {
        assert_eq!(split_sizes(10, (0.6, 0.2, 0.2)).unwrap(), (6, 2, 2));
        assert_eq!(split_sizes(11, (0.6, 0.2, 0.2)).unwrap(), (7, 2, 2));
        assert_eq!(split_sizes(2708, (0.6, 0.2, 0.2)).unwrap(), (1626, 541, 541));
        assert_eq!(split_sizes(7, (1.0, 0.0, 0.0)).unwrap(), (7, 0, 0));
        assert!(split_sizes(7, (0.8, 0.2, 0.2)).is_err());
    }

    #[test]
    fn all_train() {
        let g = labelled(9);
        let s = make_split(&g, (1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(s.train.len(), 9);
        assert!(s.val.is_empty() && s.test.is_empty());
        assert!(!s.train.contains(&"unlabelled".to_string()));
    }

    #[test]
    fn disjoint_and_deterministic() {
        let g = labelled(10);
        let s = make_split(&g, (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
        assert_eq!(s, make_split(&g, (0.6, 0.2, 0.2), 4).unwrap());
    }
}
