//! One line per acceptance criterion. Runs without the libtest harness so
//! every line is printed; exits non-zero if any criterion fails.
//!
//! Cora criteria read `GRAFENNE_CORA_DIR`, a directory holding either
//! `cora.content` + `cora.cites` or `edges.tsv` + `features.tsv` + `labels.tsv`.

mod support;

use std::path::PathBuf;
use std::time::Instant;

use grafenne::continual::{run_streams, ContinualConfig, Strategy};
use grafenne::graph::io::{load_graph, load_planetoid};
use grafenne::graph::HeteroGraph;
use grafenne::model::{recovery_probe, Backend, GrafenneConfig, GrafenneModel, MessageStructure, ProbeConfig};
use grafenne::synthetic::{drift_stream, planted_partition, PlantedConfig};
use grafenne::tasks::{
    run_cell, train_node_classifier, write_results, EncoderKind, Method, NodeSplit, RunResult, Task, TaskModel,
    TrainConfig,
};
use grafenne::tensor::{ParamSet, Tape};
use grafenne::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::tiny::{fill_by_name, max_dev, path_graph, PHASE1, PHASE2, PHASE3};

const GRAD_TOL: f64 = 1e-4;
const GRAD_CASES: usize = 200;
const GRAD_SECONDS: f64 = 60.0;
const HAND_TOL: f64 = 1e-9;
const PROBE_MSE: f64 = 2e-2;
const CORA_P0: f64 = 0.82;
const CORA_P50: f64 = 0.79;
const CORA_P99: f64 = 0.73;
const BASELINE_GAP: f64 = 0.03;
const ABLATION_GAP: f64 = 0.03;
const LINK_AUC: f64 = 0.84;
const TRANSLATION_GAP: f64 = 0.015;
const CONTINUAL_GAP: f64 = 0.02;
const CONTINUAL_SECONDS: f64 = 600.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let r = support::grad::suite(2024, GRAD_CASES);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.worst < GRAD_TOL && r.ops.len() == 16 && r.heads == 4 && secs < GRAD_SECONDS,
        format!(
            "{GRAD_CASES} programs, worst rel err {:.2e} (case {}), {} ops, {} heads, {secs:.1}s",
            r.worst,
            r.worst_case,
            r.ops.len(),
            r.heads
        ),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> HeteroGraph {
    let nodes = rng.gen_range(1..=50);
    let features = rng.gen_range(0..=12);
    let mut g = HeteroGraph::default();
    for v in 0..nodes {
        g.add_node(format!("v{v}"), None).unwrap();
        for f in 0..features {
            if rng.gen_bool(0.3) {
                g.set_feature(&format!("v{v}"), &format!("f{f}"), rng.gen_range(-2.0..2.0))
                    .unwrap();
            }
        }
    }
    for _ in 0..rng.gen_range(0..=nodes * 3) {
        let (u, v) = (
            format!("v{}", rng.gen_range(0..nodes)),
            format!("v{}", rng.gen_range(0..nodes)),
        );
        if u != v && !g.has_edge(&u, &v) {
            g.add_edge(&u, &v).unwrap();
        }
    }
    g
}

fn transformation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let g = random_graph(&mut rng);
        let alt = g.to_allotropic();
        let entries: usize = g.nodes().map(|(_, n)| n.features.len()).sum();
        if alt.num_alt_nodes() != g.num_nodes() + g.num_features() {
            return outcome(false, format!("case {case}: node count"));
        }
        if alt.num_alt_edges() != g.num_edges() + entries {
            return outcome(false, format!("case {case}: edge count"));
        }
        if alt.project_back() != g.feature_maps() {
            return outcome(false, format!("case {case}: round trip"));
        }
    }
    outcome(true, "100 graphs: counts and round trip exact")
}

fn hand_evaluation() -> Outcome {
    let g = path_graph();
    let mut params = ParamSet::new();
    let cfg = GrafenneConfig {
        layers: 1,
        dim: 2,
        backend: Backend::Sage,
        ..GrafenneConfig::default()
    };
    let mut model = GrafenneModel::new(&mut params, cfg).unwrap();
    let alt = g.to_allotropic();
    model.ensure_features(&mut params, &alt).unwrap();
    fill_by_name(&mut params);
    let s = MessageStructure::full(&alt).unwrap();
    let mut tape = Tape::new();
    let st = model.init_states(&mut tape, &params, &alt).unwrap();
    let layer = &model.layers[0];
    let (h1, _) = layer.phase1(&mut tape, &params, &s, st.graph, st.features).unwrap();
    let h2 = layer.phase2(&mut tape, &params, &s, h1).unwrap();
    let (h3, _) = layer.phase3(&mut tape, &params, &s, st.features, h2).unwrap();
    let devs = [
        max_dev(tape.value(h1), &PHASE1),
        max_dev(tape.value(h2), &PHASE2),
        max_dev(tape.value(h3), &PHASE3),
    ];
    let worst = devs.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst < HAND_TOL,
        format!(
            "max deviation per phase {:.1e} {:.1e} {:.1e}",
            devs[0], devs[1], devs[2]
        ),
    )
}

fn inductivity() -> Outcome {
    let cfg = PlantedConfig {
        nodes: 120,
        classes: 3,
        ..PlantedConfig::default()
    };
    let g = planted_partition(&cfg, 3).unwrap();
    let model_cfg = GrafenneConfig {
        dim: 16,
        ..GrafenneConfig::default()
    };
    let mut m = TaskModel::new(EncoderKind::Grafenne, model_cfg, 3).unwrap();
    let input = m.prepare(g.to_allotropic(), None).unwrap();
    let split = NodeSplit {
        train: (0..80).collect(),
        val: (80..100).collect(),
        test: (100..120).collect(),
    };
    let train = TrainConfig {
        epochs: 100,
        lr: 1e-2,
        patience: 0,
        ..TrainConfig::default()
    };
    let acc = train_node_classifier(&mut m, &input, &split, &train, 0)
        .unwrap()
        .test_metric;
    let table = match &m.encoder {
        grafenne::tasks::Encoder::Grafenne(e) => e.embedding_param(),
        _ => unreachable!(),
    };
    let before = m.params.count_excluding(&[table]);

    let mut g2 = g.clone();
    for k in 0..5 {
        let id = format!("new{k}");
        g2.add_node(&id, None).unwrap();
        for f in 0..3 {
            g2.set_feature(&id, &format!("unseen{f}"), 1.0 + f as f64).unwrap();
        }
        g2.set_feature(&id, "c0_0", 1.0).unwrap();
        g2.add_edge(&id, "n0000").unwrap();
    }
    let added = m.ensure_features(&g2.to_allotropic()).unwrap();
    let input2 = m.prepare(g2.to_allotropic(), None).unwrap();
    let mut tape = Tape::new();
    let logits = m.logits(&mut tape, &input2, None).unwrap();
    let out = tape.value(logits);
    let finite = out.data().iter().all(|x| x.is_finite());
    let after = m.params.count_excluding(&[table]);
    outcome(
        finite && after == before && added == 3 && out.shape()[0] == 125,
        format!("trained acc {acc:.3}; {added} new feature rows; non-embedding params {before} -> {after}; outputs finite: {finite}"),
    )
}

fn feature_recovery() -> Outcome {
    let cfg = ProbeConfig::default();
    let r = recovery_probe(&cfg).unwrap();
    outcome(
        r.train_mse < PROBE_MSE && r.untrained_mse > r.train_mse && r.heldout_mse < r.untrained_mse,
        format!(
            "d={} nodes={}: trained {:.4} (< {PROBE_MSE}), held-out {:.4}, untrained {:.4}",
            cfg.dim, cfg.nodes, r.train_mse, r.heldout_mse, r.untrained_mse
        ),
    )
}

fn continual() -> Outcome {
    let seed = 0;
    let g = planted_partition(&PlantedConfig::default(), seed).unwrap();
    let deltas = drift_stream(&g, 9, 40, seed).unwrap();
    let model = GrafenneConfig {
        dim: 32,
        ..GrafenneConfig::default()
    };
    let train = TrainConfig {
        epochs: 300,
        lr: 1e-2,
        patience: 100,
        ..TrainConfig::default()
    };
    let cont = ContinualConfig {
        epochs: 100,
        lr: 1e-2,
        ..ContinualConfig::default()
    };
    let start = Instant::now();
    let recs = run_streams(
        &g,
        &deltas,
        &Strategy::ALL,
        &model,
        &train,
        &cont,
        seed,
        Execution::Parallel,
    )
    .unwrap();
    let zero = ContinualConfig { lambda: 0.0, ..cont };
    let ewc0 = run_streams(
        &g,
        &deltas,
        &[Strategy::Ewc],
        &model,
        &train,
        &zero,
        seed,
        Execution::Parallel,
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let last = |s: Strategy| recs.iter().rfind(|r| r.strategy == s).unwrap().accuracy;
    let (oracle, ewc, ft) = (last(Strategy::Oracle), last(Strategy::Ewc), last(Strategy::Ft));
    let ft_trace: Vec<_> = recs
        .iter()
        .filter(|r| r.strategy == Strategy::Ft)
        .map(|r| (r.accuracy, r.fingerprint))
        .collect();
    let ewc0_trace: Vec<_> = ewc0.iter().map(|r| (r.accuracy, r.fingerprint)).collect();
    let identical = ft_trace == ewc0_trace;
    outcome(
        oracle >= ewc && ewc >= ft && ewc - ft >= CONTINUAL_GAP && identical && secs < CONTINUAL_SECONDS,
        format!(
            "final oracle {oracle:.3} ewc {ewc:.3} ft {ft:.3} er {:.3}; ewc(lambda=0) == ft: {identical}; {secs:.0}s",
            last(Strategy::Er)
        ),
    )
}

fn csv_bytes(r: &RunResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_results(&mut out, std::slice::from_ref(r)).unwrap();
    out
}

fn determinism() -> Outcome {
    let cfg = PlantedConfig {
        nodes: 60,
        classes: 3,
        class_features: 3,
        noise_features: 4,
        ..PlantedConfig::default()
    };
    let g = planted_partition(&cfg, 7).unwrap();
    let model = GrafenneConfig {
        dim: 8,
        ..GrafenneConfig::default()
    };
    let mut checked = 0;
    for task in [Task::NodeClassification, Task::LinkPrediction] {
        let train = TrainConfig {
            task,
            epochs: 30,
            lr: 1e-2,
            patience: 10,
            seeds: vec![0, 1],
            ..TrainConfig::default()
        };
        for method in ["grafenne", "fp+sage", "nm+gat", "vanilla_alt"] {
            let method: Method = method.parse().unwrap();
            let runs: Vec<Vec<u8>> = [Execution::Parallel, Execution::Parallel, Execution::Sequential]
                .into_iter()
                .map(|exec| csv_bytes(&run_cell("toy", &g, method, 0.4, &model, &train, exec).unwrap()))
                .collect();
            if runs[0] != runs[1] || runs[1] != runs[2] {
                return outcome(false, format!("{method} {task} differs between reruns"));
            }
            checked += 1;
        }
    }
    outcome(
        true,
        format!("{checked} cells byte-identical over three runs (parallel, parallel, sequential)"),
    )
}

fn cora_dir() -> Option<PathBuf> {
    std::env::var_os("GRAFENNE_CORA_DIR").map(PathBuf::from)
}

fn load_cora() -> Result<HeteroGraph, String> {
    let dir = cora_dir().ok_or("GRAFENNE_CORA_DIR is not set; Cora is not available")?;
    let planetoid = (dir.join("cora.content"), dir.join("cora.cites"));
    let g = if planetoid.0.exists() {
        load_planetoid(&planetoid.0, &planetoid.1)
    } else {
        load_graph(
            &dir.join("edges.tsv"),
            &dir.join("features.tsv"),
            Some(&dir.join("labels.tsv")),
        )
    };
    g.map_err(|e| format!("loading Cora from {}: {e}", dir.display()))
}

/// Cora cells, each run once and shared between criteria.
struct Cora {
    graph: Result<HeteroGraph, String>,
    cache: std::collections::BTreeMap<String, f64>,
}

impl Cora {
    fn mean(&mut self, method: &str, p: f64, task: Task, scale: f64) -> Result<f64, String> {
        let key = format!("{method}/{p}/{task}/{scale}");
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let g = self.graph.as_ref().map_err(Clone::clone)?;
        let g = if scale == 1.0 {
            g.clone()
        } else {
            g.translate_features(scale, 0.0)
        };
        let train = TrainConfig {
            task,
            ..TrainConfig::default()
        };
        let method: Method = method.parse().map_err(|e| format!("{e}"))?;
        let r = run_cell(
            "cora",
            &g,
            method,
            p,
            &GrafenneConfig::default(),
            &train,
            Execution::Parallel,
        )
        .map_err(|e| e.to_string())?;
        self.cache.insert(key, r.mean());
        Ok(r.mean())
    }
}

fn cora_outcome(r: Result<Outcome, String>) -> Outcome {
    r.unwrap_or_else(|e| outcome(false, e))
}

fn cora_reproduction(c: &mut Cora) -> Outcome {
    cora_outcome((|| {
        let nc = Task::NodeClassification;
        let a0 = c.mean("grafenne", 0.0, nc, 1.0)?;
        let a50 = c.mean("grafenne", 0.5, nc, 1.0)?;
        let a99 = c.mean("grafenne", 0.99, nc, 1.0)?;
        Ok(outcome(
            a0 >= CORA_P0 && a50 >= CORA_P50 && a99 >= CORA_P99,
            format!("p=0 {a0:.4} (>= {CORA_P0}), p=0.5 {a50:.4} (>= {CORA_P50}), p=0.99 {a99:.4} (>= {CORA_P99})"),
        ))
    })())
}

fn cora_baselines(c: &mut Cora) -> Outcome {
    cora_outcome((|| {
        let nc = Task::NodeClassification;
        let ours = c.mean("grafenne", 0.99, nc, 1.0)?;
        let sage = c.mean("sage", 0.99, nc, 1.0)?;
        let fp = c.mean("fp+grafenne", 0.99, nc, 1.0)?;
        Ok(outcome(
            ours - sage >= BASELINE_GAP && fp >= ours,
            format!("p=0.99: grafenne {ours:.4}, sl+sage {sage:.4}, fp+grafenne {fp:.4}"),
        ))
    })())
}

fn cora_ablation(c: &mut Cora) -> Outcome {
    cora_outcome((|| {
        let nc = Task::NodeClassification;
        let ours = c.mean("grafenne", 0.0, nc, 1.0)?;
        let vanilla = c.mean("vanilla_alt", 0.0, nc, 1.0)?;
        Ok(outcome(
            ours - vanilla >= ABLATION_GAP,
            format!("p=0: grafenne {ours:.4}, vanilla on allotropic graph {vanilla:.4}"),
        ))
    })())
}

fn cora_link(c: &mut Cora) -> Outcome {
    cora_outcome((|| {
        let auc = c.mean("grafenne", 0.0, Task::LinkPrediction, 1.0)?;
        Ok(outcome(auc >= LINK_AUC, format!("p=0 AUC {auc:.4} (>= {LINK_AUC})")))
    })())
}

fn cora_translation(c: &mut Cora) -> Outcome {
    cora_outcome((|| {
        let nc = Task::NodeClassification;
        let plain = c.mean("grafenne", 0.0, nc, 1.0)?;
        let scaled = c.mean("grafenne", 0.0, nc, 10.0)?;
        Ok(outcome(
            (plain - scaled).abs() <= TRANSLATION_GAP,
            format!("unscaled {plain:.4}, x10 {scaled:.4}"),
        ))
    })())
}

type Criterion = Box<dyn FnOnce(&mut Cora) -> Outcome>;

fn main() {
    let mut cora = Cora {
        graph: load_cora(),
        cache: Default::default(),
    };
    let criteria: Vec<(&str, Criterion)> = vec![
        ("gradient suite", Box::new(|_| gradient_suite())),
        ("transformation oracle", Box::new(|_| transformation_oracle())),
        ("hand evaluation", Box::new(|_| hand_evaluation())),
        ("inductivity", Box::new(|_| inductivity())),
        ("feature recovery", Box::new(|_| feature_recovery())),
        ("cora reproduction", Box::new(cora_reproduction)),
        ("cora baseline ordering", Box::new(cora_baselines)),
        ("cora ablation", Box::new(cora_ablation)),
        ("cora link prediction", Box::new(cora_link)),
        ("cora translation", Box::new(cora_translation)),
        ("continual ordering", Box::new(|_| continual())),
        ("determinism", Box::new(|_| determinism())),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run(&mut cora);
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {name:<24} {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
