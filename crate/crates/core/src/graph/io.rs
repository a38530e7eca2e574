//! Tab-separated text formats.
//!
//! * edges: `u<TAB>v`
//! * features: `u<TAB>f<TAB>value`
//! * labels: `u<TAB>class`
//! * embeddings: `feature<TAB>x_1<TAB>…<TAB>x_d`
//! * planetoid: `*.content` rows `id<TAB>x_1<TAB>…<TAB>x_k<TAB>class` and
//!   `*.cites` rows `u<TAB>v`
//! * streams: `t<TAB>op<TAB>args…`, with `op` one of `ADDN node label|-`,
//!   `DELN node`, `ADDE u v`, `DELE u v`, `ADDF node feature value`,
//!   `DELF node feature`
//!
//! Blank lines and lines starting with `#` are skipped. Field counts are exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AllotropicGraph, DeltaOp, HeteroGraph, StreamDelta};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-comment lines as `(line number, fields)`, checking the field count.
fn records(path: &Path, text: &str, counts: &[usize]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(|s| s.trim().to_string()).collect();
        if !counts.is_empty() && !counts.contains(&fields.len()) {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {counts:?} fields, found {}", fields.len()),
            ));
        }
        if fields.iter().any(String::is_empty) {
            return Err(parse_err(path, i + 1, "empty field"));
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn parse_value(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

/// Class names in id order: numeric order when every name is an integer, else lexicographic.
pub fn order_classes(names: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = names.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().expect("checked numeric"));
    }
    v
}

/// Reads a graph. Nodes are those named in the label or feature file; an
/// edge naming any other node is rejected. Self-loops are dropped.
pub fn load_graph(edges: &Path, features: &Path, labels: Option<&Path>) -> Result<HeteroGraph> {
    let label_rows = match labels {
        Some(p) => records(p, &fs::read_to_string(p)?, &[2])?,
        None => Vec::new(),
    };
    let feature_rows = records(features, &fs::read_to_string(features)?, &[3])?;
    let edge_rows = records(edges, &fs::read_to_string(edges)?, &[2])?;

    let classes = order_classes(label_rows.iter().map(|(_, f)| f[1].clone()));
    let mut g = HeteroGraph::with_classes(classes);
    let mut seen_labels = BTreeMap::new();
    for (line, f) in &label_rows {
        if seen_labels.insert(f[0].clone(), *line).is_some() {
            return Err(parse_err(
                labels.expect("rows imply path"),
                *line,
                format!("duplicate label for `{}`", f[0]),
            ));
        }
    }
    let mut node_ids: BTreeSet<&str> = label_rows.iter().map(|(_, f)| f[0].as_str()).collect();
    node_ids.extend(feature_rows.iter().map(|(_, f)| f[0].as_str()));
    for id in node_ids {
        g.add_node(id, None)?;
    }
    for (_, f) in &label_rows {
        let class = g.class_id(&f[1]).expect("class registered");
        g.set_label(&f[0], Some(class))?;
    }
    let mut seen = BTreeSet::new();
    for (line, f) in &feature_rows {
        if !seen.insert((f[0].as_str(), f[1].as_str())) {
            return Err(parse_err(
                features,
                *line,
                format!("duplicate entry ({}, {})", f[0], f[1]),
            ));
        }
        let value = parse_value(features, *line, &f[2])?;
        g.set_feature(&f[0], &f[1], value)?;
    }
    let mut loops = 0;
    for (line, f) in &edge_rows {
        for x in [&f[0], &f[1]] {
            if !g.contains_node(x) {
                return Err(parse_err(edges, *line, format!("dangling endpoint `{x}`")));
            }
        }
        if f[0] == f[1] {
            loops += 1;
            continue;
        }
        if !g.has_edge(&f[0], &f[1]) {
            g.add_edge(&f[0], &f[1])?;
        }
    }
    if loops > 0 {
        log::warn!("{}: dropped {loops} self-loops", edges.display());
    }
    Ok(g)
}

/// Reads the raw planetoid citation format. Column `i` of the content file
/// becomes feature `w{i}`; zeros are not stored. Citations naming unknown
/// papers and self-citations are dropped with a warning.
pub fn load_planetoid(content: &Path, cites: &Path) -> Result<HeteroGraph> {
    let rows = records(content, &fs::read_to_string(content)?, &[])?;
    let edge_rows = records(cites, &fs::read_to_string(cites)?, &[2])?;
    let width = rows.first().map_or(0, |(_, f)| f.len());
    if width < 2 {
        return Err(parse_err(
            content,
            rows.first().map_or(1, |r| r.0),
            "expected an id and a class",
        ));
    }
    if let Some((line, f)) = rows.iter().find(|(_, f)| f.len() != width) {
        return Err(parse_err(
            content,
            *line,
            format!("expected {width} fields, found {}", f.len()),
        ));
    }
    let classes = order_classes(rows.iter().map(|(_, f)| f[width - 1].clone()));
    let mut g = HeteroGraph::with_classes(classes);
    for (line, f) in &rows {
        if g.contains_node(&f[0]) {
            return Err(parse_err(content, *line, format!("duplicate paper `{}`", f[0])));
        }
        g.add_node(f[0].clone(), g.class_id(&f[width - 1]))?;
        for (i, x) in f[1..width - 1].iter().enumerate() {
            let v = parse_value(content, *line, x)?;
            if v != 0.0 {
                g.set_feature(&f[0], &format!("w{i}"), v)?;
            }
        }
    }
    let mut dropped = 0;
    for (_, f) in &edge_rows {
        if f[0] == f[1] || !g.contains_node(&f[0]) || !g.contains_node(&f[1]) {
            dropped += 1;
            continue;
        }
        if !g.has_edge(&f[0], &f[1]) {
            g.add_edge(&f[0], &f[1])?;
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} citations", cites.display());
    }
    Ok(g)
}

/// Pre-trained feature vectors, all of one width, in file order.
pub fn load_embeddings(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, f) in records(path, &text, &[])? {
        if f.len() < 2 {
            return Err(parse_err(path, line, "expected a feature id and at least one value"));
        }
        if !seen.insert(f[0].clone()) {
            return Err(parse_err(path, line, format!("duplicate feature `{}`", f[0])));
        }
        let values = f[1..]
            .iter()
            .map(|x| parse_value(path, line, x))
            .collect::<Result<Vec<_>>>()?;
        if let Some((_, first)) = out.first() {
            if first.len() != values.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("width {} differs from {}", values.len(), first.len()),
                ));
            }
        }
        out.push((f[0].clone(), values));
    }
    Ok(out)
}

/// Writes the three files read by [`load_graph`].
pub fn save_graph(g: &HeteroGraph, edges: &Path, features: &Path, labels: &Path) -> Result<()> {
    let mut e = String::new();
    for (u, v) in g.edges() {
        writeln!(e, "{u}\t{v}").expect("write to string");
    }
    let mut f = String::new();
    let mut l = String::new();
    for (id, n) in g.nodes() {
        for (k, x) in &n.features {
            writeln!(f, "{id}\t{k}\t{x:?}").expect("write to string");
        }
        if let Some(c) = n.label {
            writeln!(l, "{id}\t{}", g.classes()[c]).expect("write to string");
        }
    }
    fs::write(edges, e)?;
    fs::write(features, f)?;
    fs::write(labels, l)?;
    Ok(())
}

/// Parses a stream file. Class names in `ADDN` are resolved against `g`.
pub fn parse_stream(path: &Path, text: &str, g: &HeteroGraph) -> Result<Vec<StreamDelta>> {
    let mut by_t: BTreeMap<usize, Vec<DeltaOp>> = BTreeMap::new();
    for (line, f) in records(path, text, &[])? {
        let err = |m: String| parse_err(path, line, m);
        if f.len() < 2 {
            return Err(err("missing op".into()));
        }
        let t: usize = f[0].parse().map_err(|_| err(format!("bad timestamp `{}`", f[0])))?;
        let want = match f[1].as_str() {
            "ADDN" | "ADDE" | "DELE" | "DELF" => 4,
            "DELN" => 3,
            "ADDF" => 5,
            other => return Err(err(format!("unknown op `{other}`"))),
        };
        if f.len() != want {
            return Err(err(format!("{} takes {} fields, found {}", f[1], want, f.len())));
        }
        let op = match f[1].as_str() {
            "ADDN" => {
                let label = if f[3] == "-" {
                    None
                } else {
                    Some(
                        g.class_id(&f[3])
                            .ok_or_else(|| err(format!("unknown class `{}`", f[3])))?,
                    )
                };
                DeltaOp::AddNode {
                    node: f[2].clone(),
                    label,
                }
            }
            "DELN" => DeltaOp::DelNode { node: f[2].clone() },
            "ADDE" => DeltaOp::AddEdge {
                u: f[2].clone(),
                v: f[3].clone(),
            },
            "DELE" => DeltaOp::DelEdge {
                u: f[2].clone(),
                v: f[3].clone(),
            },
            "ADDF" => DeltaOp::AddFeature {
                node: f[2].clone(),
                feature: f[3].clone(),
                value: parse_value(path, line, &f[4])?,
            },
            _ => DeltaOp::DelFeature {
                node: f[2].clone(),
                feature: f[3].clone(),
            },
        };
        by_t.entry(t).or_default().push(op);
    }
    Ok(by_t.into_iter().map(|(t, ops)| StreamDelta { t, ops }).collect())
}

pub fn load_stream(path: &Path, g: &HeteroGraph) -> Result<Vec<StreamDelta>> {
    parse_stream(path, &fs::read_to_string(path)?, g)
}

pub fn format_stream(deltas: &[StreamDelta], g: &HeteroGraph) -> String {
    let mut s = String::new();
    for d in deltas {
        for op in &d.ops {
            let t = d.t;
            let line = match op {
                DeltaOp::AddNode { node, label } => {
                    let c = label.map_or("-".to_string(), |c| g.classes()[c].clone());
                    format!("{t}\tADDN\t{node}\t{c}")
                }
                DeltaOp::DelNode { node } => format!("{t}\tDELN\t{node}"),
                DeltaOp::AddEdge { u, v } => format!("{t}\tADDE\t{u}\t{v}"),
                DeltaOp::DelEdge { u, v } => format!("{t}\tDELE\t{u}\t{v}"),
                DeltaOp::AddFeature { node, feature, value } => {
                    format!("{t}\tADDF\t{node}\t{feature}\t{value:?}")
                }
                DeltaOp::DelFeature { node, feature } => format!("{t}\tDELF\t{node}\t{feature}"),
            };
            s.push_str(&line);
            s.push('\n');
        }
    }
    s
}

/// Text dump of the allotropic graph: a header with counts, then `N`, `F`, `E` and `X` records.
pub fn format_allotropic(alt: &AllotropicGraph) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "# graph_nodes={} feature_nodes={} graph_edges={} feature_edges={}",
        alt.num_graph_nodes(),
        alt.num_feature_nodes(),
        alt.edges().len(),
        alt.feature_edges().len()
    )
    .expect("write to string");
    let g = alt.graph_node_ids();
    let f = alt.feature_node_ids();
    for id in g {
        writeln!(s, "N\t{id}").expect("write to string");
    }
    for id in f {
        writeln!(s, "F\t{id}").expect("write to string");
    }
    for &(a, b) in alt.edges() {
        writeln!(s, "E\t{}\t{}", g[a], g[b]).expect("write to string");
    }
    for e in alt.feature_edges() {
        writeln!(s, "X\t{}\t{}\t{:?}", g[e.node], f[e.feature], e.weight).expect("write to string");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_tiny_graph() {
        let d = tempfile::tempdir().unwrap();
        let e = file(d.path(), "e", "# comment\n0\t1\n1\t0\n");
        let f = file(d.path(), "f", "0\tf0\t1.0\n");
        let l = file(d.path(), "l", "0\tb\n1\ta\n");
        let g = load_graph(&e, &f, Some(&l)).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.num_features()), (2, 1, 1));
        assert_eq!(g.classes(), ["a", "b"]);
        assert_eq!(g.node("0").unwrap().label, Some(1));
    }

    #[test]
    fn loads_planetoid_files() {
        let d = tempfile::tempdir().unwrap();
        let c = file(
            d.path(),
            "x.content",
            "31\t0\t1\t1\tTheory\n7\t1\t0\t0\tRule_Learning\n",
        );
        let e = file(d.path(), "x.cites", "31\t7\n7\t31\n31\t99\n7\t7\n");
        let g = load_planetoid(&c, &e).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.num_entries()), (2, 1, 3));
        assert_eq!(g.classes(), ["Rule_Learning", "Theory"]);
        assert_eq!(g.node("31").unwrap().features.keys().collect::<Vec<_>>(), ["w1", "w2"]);
        let bad = file(d.path(), "y.content", "1\t0\tA\n2\tB\n");
        assert!(load_planetoid(&bad, &e).is_err());
    }

    #[test]
    fn empty_feature_file() {
        let d = tempfile::tempdir().unwrap();
        let e = file(d.path(), "e", "0\t1\n");
        let f = file(d.path(), "f", "");
        let l = file(d.path(), "l", "0\tx\n1\tx\n");
        let g = load_graph(&e, &f, Some(&l)).unwrap();
        assert_eq!(g.num_features(), 0);
        assert!(g.nodes().all(|(_, n)| n.features.is_empty()));
    }

    #[test]
    fn rejects_bad_input_with_line_numbers() {
        let d = tempfile::tempdir().unwrap();
        let l = file(d.path(), "l", "0\tx\n1\tx\n");
        let f = file(d.path(), "f", "");
        let dangling = file(d.path(), "e1", "0\t1\n0\t9\n");
        let err = load_graph(&dangling, &f, Some(&l)).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("dangling"), "{err}");

        let e = file(d.path(), "e2", "0\t1\n");
        let dup = file(d.path(), "f2", "0\ta\t1\n0\ta\t2\n");
        let err = load_graph(&e, &dup, Some(&l)).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("duplicate"), "{err}");

        let bad = file(d.path(), "f3", "0\ta\n");
        let err = load_graph(&e, &bad, Some(&l)).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }

    #[test]
    fn numeric_classes_sort_numerically() {
        let c = order_classes(["10", "2", "1"].map(String::from));
        assert_eq!(c, ["1", "2", "10"]);
    }

    #[test]
    fn graph_and_stream_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let mut g = HeteroGraph::with_classes(vec!["p".into(), "q".into()]);
        g.add_node("a", Some(0)).unwrap();
        g.add_node("b", Some(1)).unwrap();
        g.add_edge("a", "b").unwrap();
        g.set_feature("a", "w", 0.1 + 0.2).unwrap();
        let (pe, pf, pl) = (d.path().join("e"), d.path().join("f"), d.path().join("l"));
        save_graph(&g, &pe, &pf, &pl).unwrap();
        assert_eq!(load_graph(&pe, &pf, Some(&pl)).unwrap(), g);

        let deltas = vec![StreamDelta {
            t: 2,
            ops: vec![
                DeltaOp::AddNode {
                    node: "c".into(),
                    label: Some(1),
                },
                DeltaOp::AddFeature {
                    node: "c".into(),
                    feature: "w".into(),
                    value: 0.3,
                },
                DeltaOp::DelEdge {
                    u: "a".into(),
                    v: "b".into(),
                },
            ],
        }];
        let text = format_stream(&deltas, &g);
        assert_eq!(parse_stream(Path::new("s"), &text, &g).unwrap(), deltas);
        assert!(parse_stream(Path::new("s"), "2\tADDE\ta\n", &g).is_err());
        assert!(parse_stream(Path::new("s"), "2\tNOPE\ta\tb\n", &g).is_err());
    }
}
