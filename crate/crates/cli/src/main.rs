mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grafenne::continual::{run_streams, write_stream_records};
use grafenne::graph::io::{format_allotropic, load_embeddings, load_graph, load_planetoid, load_stream, save_graph};
use grafenne::graph::{generate_stream, HeteroGraph};
use grafenne::synthetic::{drift_stream, planted_partition, PlantedConfig};
use grafenne::tasks::{write_results, Cell, RunResult};
use grafenne::Execution;

use config::{ConfigError, DatasetSource, ExperimentConfig, StreamSource, KEYS};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(#[from] grafenne::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

fn config_help() -> String {
    let mut s = String::from("Config file keys (`key = value`, one per line, `#` comments):\n");
    for (k, v) in KEYS {
        s.push_str(&format!("  {k:<15} {v}\n"));
    }
    s.push_str("\nExit codes: 0 success, 2 config error, 3 data error.");
    s
}

#[derive(Parser, Debug)]
#[command(name = "grafenne", version, about = "Graph learning with heterogeneous node features", after_long_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (a directory for `translate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// First seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Static experiments: every (method, p) cell over the seeds.
    Run,
    /// Streaming experiments over every strategy.
    Stream,
    /// Write the allotropic form of the dataset.
    Transform,
    /// Write the dataset with every stored value replaced by scale * x + shift.
    Translate,
}

fn toy_graph() -> grafenne::Result<HeteroGraph> {
    let cfg = PlantedConfig {
        nodes: 60,
        classes: 3,
        class_features: 3,
        noise_features: 4,
        ..PlantedConfig::default()
    };
    planted_partition(&cfg, 7)
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<HeteroGraph, CliError> {
    Ok(match &cfg.source {
        DatasetSource::Toy => toy_graph()?,
        DatasetSource::Files {
            edges,
            features,
            labels,
        } => load_graph(edges, features, labels.as_deref())?,
        DatasetSource::Planetoid { content, cites } => load_planetoid(content, cites)?,
    })
}

fn input_paths(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let mut v = match &cfg.source {
        DatasetSource::Toy => vec![],
        DatasetSource::Files {
            edges,
            features,
            labels,
        } => {
            let mut v = vec![edges.clone(), features.clone()];
            v.extend(labels.clone());
            v
        }
        DatasetSource::Planetoid { content, cites } => vec![content.clone(), cites.clone()],
    };
    v.extend(cfg.embeddings.clone());
    if let StreamSource::File(p) = &cfg.stream {
        v.push(p.clone());
    }
    v
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn guard_inputs(cfg: &ExperimentConfig, outputs: &[PathBuf]) -> Result<(), CliError> {
    for o in outputs {
        if input_paths(cfg).iter().any(|i| same_file(i, o)) {
            return Err(ConfigError(format!("output {} would overwrite an input", o.display())).into());
        }
    }
    Ok(())
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> grafenne::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(grafenne::Error::from)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(grafenne::Error::from)?;
    body(tmp.as_file_mut())?;
    tmp.persist(path).map_err(|e| grafenne::Error::from(e.error))?;
    Ok(())
}

fn run_static(cfg: &ExperimentConfig, g: &HeteroGraph, out: &Path, exec: Execution) -> Result<(), CliError> {
    let pretrained = match &cfg.embeddings {
        Some(p) => load_embeddings(p)?,
        None => Vec::new(),
    };
    if let Some((_, v)) = pretrained.first() {
        if v.len() != cfg.model.dim {
            return Err(ConfigError(format!(
                "embedding width {} differs from dim {}",
                v.len(),
                cfg.model.dim
            ))
            .into());
        }
    }
    let cells: Vec<Cell> = cfg
        .methods
        .iter()
        .flat_map(|&method| cfg.ps.iter().map(move |&p| (method, p)))
        .map(|(method, p)| Cell {
            dataset: &cfg.name,
            graph: g,
            method,
            p,
            model: cfg.model,
            train: &cfg.train,
            pretrained: &pretrained,
        })
        .collect();
    let results: Vec<grafenne::Result<RunResult>> = exec.map(&cells, |c| c.run(exec));
    let results = results.into_iter().collect::<grafenne::Result<Vec<_>>>()?;
    for r in &results {
        log::info!("{} {} p={}: {:.4} ± {:.4}", r.dataset, r.method, r.p, r.mean(), r.std());
    }
    write_atomic(out, |w| write_results(w, &results))
}

fn run_stream_cmd(cfg: &ExperimentConfig, g: &HeteroGraph, out: &Path, exec: Execution) -> Result<(), CliError> {
    let deltas = match &cfg.stream {
        StreamSource::Drift { steps, per_step } => drift_stream(g, *steps, *per_step, cfg.seed)?,
        StreamSource::Random(sc) => generate_stream(g, sc, cfg.seed)?,
        StreamSource::File(p) => load_stream(p, g)?,
    };
    let recs = run_streams(
        g,
        &deltas,
        &cfg.strategies,
        &cfg.model,
        &cfg.train,
        &cfg.continual,
        cfg.seed,
        exec,
    )?;
    write_atomic(out, |w| write_stream_records(w, &recs))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            let base = p.parent().unwrap_or(Path::new("."));
            ExperimentConfig::from_text(&text, base)?
        }
        None => ExperimentConfig::from_text("", Path::new("."))?,
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    let out = cli.out.clone().ok_or_else(|| ConfigError("--out is required".into()))?;
    let workers = cli.workers.unwrap_or(0);
    let exec = if workers == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };

    let outputs = if cli.command == Command::Translate {
        ["edges.tsv", "features.tsv", "labels.tsv"]
            .iter()
            .map(|f| out.join(f))
            .collect()
    } else {
        vec![out.clone()]
    };
    guard_inputs(&cfg, &outputs)?;
    let g = load_dataset(&cfg)?;
    log::info!(
        "{}: {} nodes, {} edges, {} features",
        cfg.name,
        g.num_nodes(),
        g.num_edges(),
        g.num_features()
    );

    let work = || -> Result<(), CliError> {
        match cli.command {
            Command::Run => run_static(&cfg, &g, &out, exec),
            Command::Stream => run_stream_cmd(&cfg, &g, &out, exec),
            Command::Transform => {
                let text = format_allotropic(&g.to_allotropic());
                write_atomic(&out, |w| Ok(w.write_all(text.as_bytes())?))
            }
            Command::Translate => {
                fs::create_dir_all(&out).map_err(grafenne::Error::from)?;
                let t = g.translate_features(cfg.scale, cfg.shift);
                save_graph(&t, &outputs[0], &outputs[1], &outputs[2])?;
                Ok(())
            }
        }
    };
    with_workers(workers, work)
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("falling back to the global pool: {e}"),
        }
    }
    f()
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T>(_workers: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grafenne: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
