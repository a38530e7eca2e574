use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use super::link::LinkSplit;
use super::metrics::mean_std;
use super::model::{EncoderKind, TaskModel};
use super::train::{train_link_predictor, train_node_classifier, NodeSplit, Task, TrainConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{make_split, HeteroGraph};
use crate::imputation::{special_label, DenseFeatures, Imputer};
use crate::model::{Backend, GrafenneConfig};

/// A row of the method grid: which imputation (if any) feeds which model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Feature-node model; with an imputer, the imputed matrix is re-sparsified first.
    Grafenne { backend: Backend, imputer: Option<Imputer> },
    /// Standard GNN on a dense imputed matrix.
    Dense { backend: Backend, imputer: Imputer },
    /// Plain message passing over the allotropic graph.
    VanillaAlt,
}

impl Method {
    fn grafenne_backend(s: &str) -> Option<Backend> {
        match s {
            "grafenne" => Some(Backend::Sage),
            "grafenne_sage" => Some(Backend::Sage),
            "grafenne_gat" => Some(Backend::Gat),
            "grafenne_gin" => Some(Backend::Gin),
            _ => None,
        }
    }

    pub fn backend(&self) -> Backend {
        match *self {
            Method::Grafenne { backend, .. } | Method::Dense { backend, .. } => backend,
            Method::VanillaAlt => Backend::Sage,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let model = |b: Backend| match b {
            Backend::Sage => "grafenne".to_string(),
            b => format!("grafenne_{b}"),
        };
        match *self {
            Method::Grafenne { backend, imputer: None } => f.write_str(&model(backend)),
            Method::Grafenne {
                backend,
                imputer: Some(i),
            } => write!(f, "{i}+{}", model(backend)),
            Method::Dense {
                backend,
                imputer: Imputer::SpecialLabel(_),
            } => write!(f, "{backend}"),
            Method::Dense { backend, imputer } => write!(f, "{imputer}+{backend}"),
            Method::VanillaAlt => f.write_str("vanilla_alt"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `grafenne[_gat|_gin]`, `sage|gat|gin`, `vanilla_alt` and
    /// `{sl|nm|fp}+{model}`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "vanilla_alt" {
            return Ok(Method::VanillaAlt);
        }
        let (imputer, model) = match s.split_once('+') {
            Some((i, m)) => (Some(i.parse::<Imputer>()?), m),
            None => (None, s.as_str()),
        };
        if let Some(backend) = Self::grafenne_backend(model) {
            // Special-label imputation adds nothing for the sparse model.
            let imputer = imputer.filter(|i| !matches!(i, Imputer::SpecialLabel(_)));
            return Ok(Method::Grafenne { backend, imputer });
        }
        match model.parse::<Backend>() {
            Ok(backend) => Ok(Method::Dense {
                backend,
                imputer: imputer.unwrap_or(Imputer::SpecialLabel(0.0)),
            }),
            Err(_) => Err(Error::invalid(format!("unknown method `{s}`"))),
        }
    }
}

/// Metric values of one (dataset, method, task, p) cell over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub dataset: String,
    pub method: String,
    pub task: Task,
    pub p: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    /// Wall-clock per seed; zeros unless time recording is on.
    pub seconds: Vec<f64>,
}

impl RunResult {
    pub fn metric_name(&self) -> &'static str {
        match self.task {
            Task::NodeClassification => "accuracy",
            Task::LinkPrediction => "auc",
        }
    }

    pub fn mean(&self) -> f64 {
        mean_std(&self.values).0
    }

    /// Sample standard deviation, undisplayed (see `display_std`).
    pub fn std(&self) -> f64 {
        mean_std(&self.values).1
    }
}

/// Header of the results CSV.
pub const RESULT_HEADER: [&str; 8] = ["dataset", "method", "task", "p", "seed", "metric", "value", "seconds"];

/// One row per seed followed by `mean` and `std` rows.
pub fn write_results<W: Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(RESULT_HEADER).map_err(csv_err)?;
    for r in results {
        let task = r.task.to_string();
        let p = r.p.to_string();
        let mut row = |seed: String, value: f64, secs: f64| {
            w.write_record([
                r.dataset.as_str(),
                r.method.as_str(),
                task.as_str(),
                p.as_str(),
                seed.as_str(),
                r.metric_name(),
                value.to_string().as_str(),
                secs.to_string().as_str(),
            ])
        };
        for ((seed, &v), &s) in r.seeds.iter().zip(&r.values).zip(&r.seconds) {
            row(seed.to_string(), v, s).map_err(csv_err)?;
        }
        let (t_mean, t_std) = mean_std(&r.seconds);
        row("mean".into(), r.mean(), t_mean).map_err(csv_err)?;
        row("std".into(), r.std(), t_std).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// What goes into the encoder for one masked graph.
struct Prepared {
    graph: HeteroGraph,
    dense: Option<crate::tensor::Tensor>,
    kind: EncoderKind,
}

fn prepare(g: &HeteroGraph, method: Method, p: f64, seed: u64, exec: Execution) -> Result<Prepared> {
    let x = DenseFeatures::with_missing(g, p, seed)?;
    Ok(match method {
        Method::Grafenne { imputer: None, .. } | Method::VanillaAlt => Prepared {
            graph: special_label(&x, 0.0).to_graph(g)?,
            dense: None,
            kind: if method == Method::VanillaAlt {
                EncoderKind::VanillaAlt
            } else {
                EncoderKind::Grafenne
            },
        },
        Method::Grafenne { imputer: Some(i), .. } => Prepared {
            graph: i.apply(g, &x, exec)?.to_graph(g)?,
            dense: None,
            kind: EncoderKind::Grafenne,
        },
        Method::Dense { imputer, .. } => Prepared {
            graph: g.clone(),
            dense: Some(imputer.apply(g, &x, exec)?.values),
            kind: EncoderKind::Dense {
                in_dim: x.num_features(),
            },
        },
    })
}

/// One (dataset, method, p) experiment cell.
#[derive(Clone, Copy, Debug)]
pub struct Cell<'a> {
    pub dataset: &'a str,
    pub graph: &'a HeteroGraph,
    pub method: Method,
    pub p: f64,
    pub model: GrafenneConfig,
    pub train: &'a TrainConfig,
    /// Fixed feature vectors for the embedding table; empty means learned.
    pub pretrained: &'a [(String, Vec<f64>)],
}

impl Cell<'_> {
    /// Trains and evaluates one seed; returns the test metric.
    pub fn run_seed(&self, seed: u64, exec: Execution) -> Result<f64> {
        let (g, method, train) = (self.graph, self.method, self.train);
        let config = GrafenneConfig {
            backend: method.backend(),
            seed,
            ..self.model
        };
        let build = |kind, classes| -> Result<TaskModel> {
            let mut m = TaskModel::new(kind, config, classes)?;
            if !self.pretrained.is_empty() {
                m.use_pretrained(self.pretrained)?;
            }
            Ok(m)
        };
        match train.task {
            Task::NodeClassification => {
                let split = make_split(g, train.fractions, seed)?;
                let prep = prepare(g, method, self.p, seed, exec)?;
                let mut m = build(prep.kind, g.num_classes())?;
                let input = m.prepare(prep.graph.to_allotropic(), prep.dense)?;
                let split = NodeSplit {
                    train: split.train_indices(&input.alt),
                    val: split.val_indices(&input.alt),
                    test: split.test_indices(&input.alt),
                };
                Ok(train_node_classifier(&mut m, &input, &split, train, seed)?.test_metric)
            }
            Task::LinkPrediction => {
                let full = g.to_allotropic();
                let split = LinkSplit::new(
                    &full,
                    train.fractions,
                    train.neg_ratio,
                    &mut crate::rng_for(seed, "link-split"),
                )?;
                // Held-out edges are invisible to imputation as well as to the encoder.
                let visible = split.training_graph(g, &full)?;
                let prep = prepare(&visible, method, self.p, seed, exec)?;
                let mut m = build(prep.kind, 0)?;
                let input = m.prepare(prep.graph.to_allotropic(), prep.dense)?;
                Ok(train_link_predictor(&mut m, &input, &split, train, seed)?.test_metric)
            }
        }
    }

    /// Runs every seed. Seeds run through `exec` and are collected in seed order.
    pub fn run(&self, exec: Execution) -> Result<RunResult> {
        let train = self.train;
        train.validate()?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("missing rate {} outside [0, 1]", self.p)));
        }
        let runs: Vec<Result<(f64, f64)>> = exec.map(&train.seeds, |&seed| {
            let start = Instant::now();
            let v = self.run_seed(seed, exec)?;
            let secs = if train.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            log::info!("{} {} p={} seed={seed}: {v:.4}", self.dataset, self.method, self.p);
            Ok((v, secs))
        });
        let mut values = Vec::with_capacity(runs.len());
        let mut seconds = Vec::with_capacity(runs.len());
        for r in runs {
            let (v, s) = r?;
            values.push(v);
            seconds.push(s);
        }
        Ok(RunResult {
            dataset: self.dataset.to_string(),
            method: self.method.to_string(),
            task: train.task,
            p: self.p,
            seeds: train.seeds.clone(),
            values,
            seconds,
        })
    }
}

/// [`Cell::run`] without pre-trained embeddings.
pub fn run_cell(
    dataset: &str,
    g: &HeteroGraph,
    method: Method,
    p: f64,
    model: &GrafenneConfig,
    train: &TrainConfig,
    exec: Execution,
) -> Result<RunResult> {
    Cell {
        dataset,
        graph: g,
        method,
        p,
        model: *model,
        train,
        pretrained: &[],
    }
    .run(exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in [
            "grafenne",
            "grafenne_gat",
            "grafenne_gin",
            "sage",
            "gat",
            "gin",
            "nm+sage",
            "fp+sage",
            "nm+grafenne",
            "fp+grafenne",
            "vanilla_alt",
            "fp+gin",
        ] {
            assert_eq!(name.parse::<Method>().unwrap().to_string(), name);
        }
        assert_eq!("sl+sage".parse::<Method>().unwrap().to_string(), "sage");
        assert_eq!("sl+grafenne".parse::<Method>().unwrap().to_string(), "grafenne");
        assert!("mlp".parse::<Method>().is_err());
        assert!("xx+sage".parse::<Method>().is_err());
    }

    #[test]
    fn csv_layout() {
        let r = RunResult {
            dataset: "toy".into(),
            method: "sage".into(),
            task: Task::NodeClassification,
            p: 0.5,
            seeds: vec![0, 1],
            values: vec![0.5, 1.0],
            seconds: vec![0.0, 0.0],
        };
        let mut buf = Vec::new();
        write_results(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "dataset,method,task,p,seed,metric,value,seconds");
        assert_eq!(lines[1], "toy,sage,node_classification,0.5,0,accuracy,0.5,0");
        assert_eq!(lines[3], "toy,sage,node_classification,0.5,mean,accuracy,0.75,0");
        assert!(lines[4].starts_with("toy,sage,node_classification,0.5,std,accuracy,0.3535"));
        assert_eq!(lines.len(), 5);
    }
}
