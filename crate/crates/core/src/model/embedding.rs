use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::AllotropicGraph;
use crate::tensor::{ParamId, ParamSet, Tensor};

/// One learnable `d`-vector per feature id, stored as rows of a single parameter.
///
/// Rows are only ever appended, so existing embeddings (and any optimizer or
/// consolidation state aligned with them) stay in place when features appear.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEmbeddingTable {
    param: ParamId,
    rows: BTreeMap<String, usize>,
    dim: usize,
    seed: u64,
}

impl FeatureEmbeddingTable {
    pub fn new(params: &mut ParamSet, name: &str, dim: usize, seed: u64) -> Result<Self> {
        let param = params.add(name, Tensor::zeros(&[0, dim]))?;
        Ok(FeatureEmbeddingTable {
            param,
            rows: BTreeMap::new(),
            dim,
            seed,
        })
    }

    pub fn param(&self) -> ParamId {
        self.param
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, feature: &str) -> Option<usize> {
        self.rows.get(feature).copied()
    }

    /// Feature ids in row order.
    pub fn features(&self) -> Vec<&str> {
        let mut v: Vec<(&str, usize)> = self.rows.iter().map(|(k, &r)| (k.as_str(), r)).collect();
        v.sort_by_key(|&(_, r)| r);
        v.into_iter().map(|(k, _)| k).collect()
    }

    /// Initial vector for `feature`: uniform in `±sqrt(3/d)`, seeded by the feature id.
    fn fresh_row(&self, feature: &str) -> Vec<f64> {
        let mut rng = crate::rng_for(self.seed, &format!("embedding/{feature}"));
        let a = (3.0 / self.dim as f64).sqrt();
        (0..self.dim).map(|_| rng.gen_range(-a..=a)).collect()
    }

    /// Appends rows for any of `features` not yet in the table; returns how many were added.
    pub fn ensure<'a>(&mut self, params: &mut ParamSet, features: impl IntoIterator<Item = &'a str>) -> Result<usize> {
        let mut new: Vec<&str> = features.into_iter().filter(|f| !self.rows.contains_key(*f)).collect();
        new.sort_unstable();
        new.dedup();
        let rows: Vec<Vec<f64>> = new.iter().map(|f| self.fresh_row(f)).collect();
        params.append_rows(self.param, &rows)?;
        for f in &new {
            let r = self.rows.len();
            self.rows.insert(f.to_string(), r);
        }
        Ok(new.len())
    }

    /// Overwrites (or creates) the row for `feature`, e.g. with a pre-trained vector.
    pub fn set_row(&mut self, params: &mut ParamSet, feature: &str, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::shape("set_row", &[self.dim], &[values.len()]));
        }
        self.ensure(params, [feature])?;
        let r = self.rows[feature];
        let d = self.dim;
        params.value_mut(self.param).data_mut()[r * d..(r + 1) * d].copy_from_slice(values);
        Ok(())
    }

    /// Table rows for the feature nodes of `alt`, in feature-index order.
    pub fn rows_for(&self, alt: &AllotropicGraph) -> Result<Vec<usize>> {
        alt.feature_node_ids()
            .iter()
            .map(|f| self.row(f).ok_or_else(|| Error::MissingEmbedding(f.clone())))
            .collect()
    }

    pub(crate) fn restore_rows(&mut self, rows: BTreeMap<String, usize>) {
        self.rows = rows;
    }

    pub(crate) fn row_map(&self) -> &BTreeMap<String, usize> {
        &self.rows
    }
}
