//! Text checkpoints. Values are written as the hex bit pattern of each `f64`,
//! so a reload reproduces every parameter bit for bit.
//!
//! ```text
//! grafenne-checkpoint 1
//! meta    <key>   <value>
//! feature <id>    <row>
//! param   <name>  <d0,d1,..>  <hex> <hex> ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::config::GrafenneConfig;
use super::embedding::FeatureEmbeddingTable;
use super::grafenne::GrafenneModel;
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

const MAGIC: &str = "grafenne-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub features: BTreeMap<String, usize>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(params: &ParamSet, table: Option<&FeatureEmbeddingTable>, meta: Vec<(String, String)>) -> Self {
        Checkpoint {
            meta,
            features: table.map(|t| t.row_map().clone()).unwrap_or_default(),
            params: params.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(MAGIC);
        s.push('\n');
        for (k, v) in &self.meta {
            writeln!(s, "meta\t{k}\t{v}").expect("write to string");
        }
        for (f, r) in &self.features {
            writeln!(s, "feature\t{f}\t{r}").expect("write to string");
        }
        for (name, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let vals: Vec<String> = t.data().iter().map(|x| format!("{:016x}", x.to_bits())).collect();
            writeln!(s, "param\t{name}\t{}\t{}", dims.join(","), vals.join(" ")).expect("write to string");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(Error::Checkpoint("missing header".into())),
        }
        let mut c = Checkpoint::default();
        for (i, line) in lines {
            let n = i + 1;
            let f: Vec<&str> = line.split('\t').collect();
            match (f[0], f.len()) {
                ("meta", 3) => c.meta.push((f[1].into(), f[2].into())),
                ("feature", 3) => {
                    let r = f[2].parse().map_err(|_| bad(n, "bad row"))?;
                    c.features.insert(f[1].into(), r);
                }
                ("param", 4) => {
                    let shape: Vec<usize> = if f[2].is_empty() {
                        Vec::new()
                    } else {
                        f[2].split(',')
                            .map(|d| d.parse().map_err(|_| bad(n, "bad shape")))
                            .collect::<Result<_>>()?
                    };
                    let data: Vec<f64> = f[3]
                        .split_whitespace()
                        .map(|h| {
                            u64::from_str_radix(h, 16)
                                .map(f64::from_bits)
                                .map_err(|_| bad(n, "bad value"))
                        })
                        .collect::<Result<_>>()?;
                    c.params.push((f[1].into(), Tensor::new(&shape, data)?));
                }
                _ => return Err(bad(n, "unrecognised record")),
            }
        }
        Ok(c)
    }

    /// Overwrites `params` by name. Every parameter must be present with its current shape.
    pub fn apply(&self, params: &mut ParamSet) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, model has {}",
                self.params.len(),
                params.len()
            )));
        }
        for (name, t) in &self.params {
            let id = params
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            let cur = params.value(id).shape();
            if cur != t.shape() {
                return Err(Error::shape("checkpoint", cur, t.shape()));
            }
            *params.value_mut(id) = t.clone();
        }
        Ok(())
    }
}

impl GrafenneModel {
    pub fn save(&self, params: &ParamSet) -> String {
        Checkpoint::capture(params, Some(&self.table), self.config.to_pairs()).to_text()
    }

    /// Rebuilds a model and its parameters from [`GrafenneModel::save`] output.
    pub fn load(text: &str) -> Result<(GrafenneModel, ParamSet)> {
        let c = Checkpoint::from_text(text)?;
        let config = GrafenneConfig::from_pairs(c.meta.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let mut params = ParamSet::new();
        let mut model = GrafenneModel::new(&mut params, config)?;
        model.restore_table(&mut params, &c)?;
        c.apply(&mut params)?;
        Ok((model, params))
    }

    pub(crate) fn restore_table(&mut self, params: &mut ParamSet, c: &Checkpoint) -> Result<()> {
        let mut ordered: Vec<(&String, usize)> = c.features.iter().map(|(k, &r)| (k, r)).collect();
        ordered.sort_by_key(|&(_, r)| r);
        if ordered.iter().enumerate().any(|(i, &(_, r))| i != r) {
            return Err(Error::Checkpoint("feature rows are not dense".into()));
        }
        let rows = vec![vec![0.0; self.config.dim]; ordered.len()];
        params.append_rows(self.table.param(), &rows)?;
        self.table.restore_rows(c.features.clone());
        Ok(())
    }
}
