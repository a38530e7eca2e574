use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Graph-node aggregation used in the second phase (and by dense baselines).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    Sage,
    Gat,
    Gin,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Sage => "sage",
            Backend::Gat => "gat",
            Backend::Gin => "gin",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sage" => Ok(Backend::Sage),
            "gat" => Ok(Backend::Gat),
            "gin" => Ok(Backend::Gin),
            _ => Err(Error::invalid(format!("unknown backend `{s}`"))),
        }
    }
}

/// Per-forward neighbourhood caps; `0` disables sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SamplingCaps {
    /// Graph neighbours per graph node (`S_ℓ`).
    pub graph: usize,
    /// Feature nodes per graph node (`S^{V^feat}`).
    pub features: usize,
    /// Graph nodes per feature node (`S^V`).
    pub nodes: usize,
}

impl SamplingCaps {
    pub fn is_active(&self) -> bool {
        self.graph > 0 || self.features > 0 || self.nodes > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrafenneConfig {
    pub layers: usize,
    pub dim: usize,
    pub backend: Backend,
    pub leaky_slope: f64,
    pub gin_epsilon: f64,
    pub caps: SamplingCaps,
    pub seed: u64,
}

impl Default for GrafenneConfig {
    fn default() -> Self {
        GrafenneConfig {
            layers: 2,
            dim: 64,
            backend: Backend::Sage,
            leaky_slope: 0.2,
            gin_epsilon: 0.0,
            caps: SamplingCaps::default(),
            seed: 0,
        }
    }
}

impl GrafenneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::invalid("layer count must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("hidden dimension must be at least 1"));
        }
        if !self.leaky_slope.is_finite() || !self.gin_epsilon.is_finite() {
            return Err(Error::invalid("slope and epsilon must be finite"));
        }
        Ok(())
    }

    /// `key=value` pairs, the inverse of [`GrafenneConfig::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("layers".into(), self.layers.to_string()),
            ("dim".into(), self.dim.to_string()),
            ("backend".into(), self.backend.to_string()),
            ("leaky_slope".into(), format!("{:?}", self.leaky_slope)),
            ("gin_epsilon".into(), format!("{:?}", self.gin_epsilon)),
            ("cap_graph".into(), self.caps.graph.to_string()),
            ("cap_features".into(), self.caps.features.to_string()),
            ("cap_nodes".into(), self.caps.nodes.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("bad value `{v}` for `{k}`")))
        }
        let mut c = GrafenneConfig::default();
        for (k, v) in pairs {
            match k {
                "layers" => c.layers = num(k, v)?,
                "dim" => c.dim = num(k, v)?,
                "backend" => c.backend = v.parse()?,
                "leaky_slope" => c.leaky_slope = num(k, v)?,
                "gin_epsilon" => c.gin_epsilon = num(k, v)?,
                "cap_graph" => c.caps.graph = num(k, v)?,
                "cap_features" => c.caps.features = num(k, v)?,
                "cap_nodes" => c.caps.nodes = num(k, v)?,
                "seed" => c.seed = num(k, v)?,
                _ => return Err(Error::invalid(format!("unknown model key `{k}`"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}
