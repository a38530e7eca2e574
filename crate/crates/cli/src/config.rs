//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use grafenne::continual::{ContinualConfig, Strategy};
use grafenne::model::GrafenneConfig;
use grafenne::tasks::{Method, Task, TrainConfig};

/// Every accepted key, with its meaning; printed by `--help`.
pub const KEYS: &[(&str, &str)] = &[
    (
        "dataset",
        "toy | files | planetoid (default files when `edges` is set, else toy)",
    ),
    ("name", "dataset name in result rows"),
    ("edges", "edge file, `u<TAB>v`"),
    ("features", "feature file, `u<TAB>feature<TAB>value`"),
    ("labels", "label file, `u<TAB>class`"),
    ("content", "planetoid content file"),
    ("cites", "planetoid citation file"),
    ("embeddings", "pre-trained feature vectors, `feature<TAB>x_1<TAB>...`"),
    ("task", "node_classification | link_prediction"),
    ("methods", "comma list of methods"),
    ("p", "comma list of missing rates in [0, 1]"),
    ("seed", "first seed (overridden by --seed)"),
    ("seeds", "number of consecutive seeds"),
    ("epochs", "training epochs"),
    ("lr", "Adam learning rate"),
    (
        "patience",
        "epochs without validation improvement before stopping; 0 = never",
    ),
    ("train_frac", "training fraction"),
    ("val_frac", "validation fraction"),
    ("test_frac", "test fraction"),
    ("neg_ratio", "negatives per positive edge"),
    ("record_time", "true to fill the seconds column"),
    ("layers", "message-passing layers"),
    ("dim", "hidden width"),
    ("leaky_slope", "LeakyReLU slope"),
    ("gin_epsilon", "GIN self weight epsilon"),
    ("cap_graph", "graph neighbours sampled per node; 0 = all"),
    ("cap_features", "features sampled per node; 0 = all"),
    ("cap_nodes", "nodes sampled per feature; 0 = all"),
    ("strategies", "comma list of ewc, ft, er, oracle"),
    ("stream", "drift | random | path to a stream file"),
    ("stream_steps", "generated stream length"),
    ("drift_per_step", "nodes touched per drift step"),
    ("p_n", "random stream: node selection probability"),
    ("p_f_add", "random stream: feature addition probability"),
    ("p_f_del", "random stream: feature deletion probability"),
    ("p_e_add", "random stream: edge additions as a fraction of |E|"),
    ("p_e_del", "random stream: edge deletion probability"),
    ("lambda", "consolidation strength"),
    ("u_size", "nodes sampled for importance"),
    ("buffer", "replay capacity (default u_size)"),
    ("stream_epochs", "update steps per timestamp"),
    ("stream_lr", "learning rate of stream updates"),
    ("scale", "translate: multiplier a in a*x + b"),
    ("shift", "translate: offset b in a*x + b"),
];

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Toy,
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: Option<PathBuf>,
    },
    Planetoid {
        content: PathBuf,
        cites: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamSource {
    Drift { steps: usize, per_step: usize },
    Random(grafenne::graph::StreamConfig),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: DatasetSource,
    pub embeddings: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub ps: Vec<f64>,
    pub seed: u64,
    pub model: GrafenneConfig,
    pub train: TrainConfig,
    pub continual: ContinualConfig,
    pub strategies: Vec<Strategy>,
    pub stream: StreamSource,
    pub scale: f64,
    pub shift: f64,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(err(format!("line {}: unknown key `{k}`", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    pairs: &'a BTreeMap<String, String>,
    base: &'a Path,
}

impl Reader<'_> {
    fn raw(&self, k: &str) -> Option<&str> {
        self.pairs.get(k).map(String::as_str)
    }

    fn get<T: FromStr>(&self, k: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(k) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| err(format!("bad value `{v}` for `{k}`"))),
        }
    }

    fn list<T: FromStr>(&self, k: &str, default: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(k).unwrap_or(default);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| err(format!("`{k}`: {e}"))))
            .collect()
    }

    fn path(&self, k: &str) -> Option<PathBuf> {
        self.raw(k).map(|v| self.base.join(v))
    }

    fn require_path(&self, k: &str, why: &str) -> Result<PathBuf, ConfigError> {
        self.path(k).ok_or_else(|| err(format!("`{k}` is required {why}")))
    }
}

impl ExperimentConfig {
    pub fn from_text(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let pairs = parse_pairs(text)?;
        let r = Reader { pairs: &pairs, base };

        let kind = r.raw("dataset").unwrap_or(if pairs.contains_key("edges") {
            "files"
        } else if pairs.contains_key("content") {
            "planetoid"
        } else {
            "toy"
        });
        let source = match kind {
            "toy" => DatasetSource::Toy,
            "files" => DatasetSource::Files {
                edges: r.require_path("edges", "for file datasets")?,
                features: r.require_path("features", "for file datasets")?,
                labels: r.path("labels"),
            },
            "planetoid" => DatasetSource::Planetoid {
                content: r.require_path("content", "for planetoid datasets")?,
                cites: r.require_path("cites", "for planetoid datasets")?,
            },
            other => return Err(err(format!("unknown dataset kind `{other}`"))),
        };
        let name = r.raw("name").map(String::from).unwrap_or_else(|| match &source {
            DatasetSource::Toy => "toy".into(),
            DatasetSource::Files { edges, .. } => stem(edges),
            DatasetSource::Planetoid { content, .. } => stem(content),
        });

        let seed: u64 = r.get("seed", 0)?;
        let n_seeds: u64 = r.get("seeds", 5)?;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            task: r.get("task", Task::NodeClassification)?,
            epochs: r.get("epochs", defaults.epochs)?,
            lr: r.get("lr", defaults.lr)?,
            patience: r.get("patience", defaults.patience)?,
            seeds: (seed..seed + n_seeds).collect(),
            fractions: (
                r.get("train_frac", defaults.fractions.0)?,
                r.get("val_frac", defaults.fractions.1)?,
                r.get("test_frac", defaults.fractions.2)?,
            ),
            neg_ratio: r.get("neg_ratio", defaults.neg_ratio)?,
            record_time: r.get("record_time", false)?,
        };
        train.validate().map_err(|e| err(e.to_string()))?;

        let model_keys = [
            "layers",
            "dim",
            "leaky_slope",
            "gin_epsilon",
            "cap_graph",
            "cap_features",
            "cap_nodes",
        ];
        let model = GrafenneConfig::from_pairs(model_keys.iter().filter_map(|k| r.raw(k).map(|v| (*k, v))))
            .map_err(|e| err(e.to_string()))?;

        let ps: Vec<f64> = r.list("p", "0")?;
        if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(err(format!("missing rate {p} outside [0, 1]")));
        }
        let methods: Vec<Method> = r.list("methods", "grafenne")?;
        if methods.is_empty() || ps.is_empty() {
            return Err(err("`methods` and `p` must not be empty"));
        }

        let cd = ContinualConfig::default();
        let continual = ContinualConfig {
            lambda: r.get("lambda", cd.lambda)?,
            u_size: r.get("u_size", cd.u_size)?,
            buffer: match r.raw("buffer") {
                None => None,
                Some(_) => Some(r.get("buffer", 0)?),
            },
            epochs: r.get("stream_epochs", cd.epochs)?,
            lr: r.get("stream_lr", cd.lr)?,
        };
        continual.validate().map_err(|e| err(e.to_string()))?;
        let steps: usize = r.get("stream_steps", 9)?;
        let stream = match r.raw("stream").unwrap_or("drift") {
            "drift" => StreamSource::Drift {
                steps,
                per_step: r.get("drift_per_step", 40)?,
            },
            "random" => StreamSource::Random(grafenne::graph::StreamConfig {
                steps,
                p_n: r.get("p_n", 0.1)?,
                p_f_add: r.get("p_f_add", 0.05)?,
                p_f_del: r.get("p_f_del", 0.05)?,
                p_e_add: r.get("p_e_add", 0.01)?,
                p_e_del: r.get("p_e_del", 0.01)?,
            }),
            _ => StreamSource::File(r.require_path("stream", "")?),
        };

        let embeddings = r.path("embeddings");
        if embeddings.is_some() && methods.iter().any(|m| matches!(m, Method::Dense { .. })) {
            return Err(err("pre-trained embeddings apply only to feature-node methods"));
        }

        Ok(ExperimentConfig {
            name,
            source,
            embeddings,
            methods,
            ps,
            seed,
            model,
            train,
            continual,
            strategies: r.list("strategies", "oracle,ewc,ft,er")?,
            stream,
            scale: r.get("scale", 1.0)?,
            shift: r.get("shift", 0.0)?,
        })
    }

    /// Re-derives the seed list from a new first seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let n = self.train.seeds.len() as u64;
        self.seed = seed;
        self.train.seeds = (seed..seed + n).collect();
        self
    }
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}
