//! GraphPack directory format.
//!
//! ```text
//! <dir>/meta.json     {"name": ..., "num_nodes": N, "num_features": F, "num_classes": C}
//! <dir>/edges.tsv     one edge per line, two whitespace-separated node ids
//! <dir>/features.csv  N lines of F comma-separated reals
//! <dir>/labels.csv    optional, N lines with one integer label each
//! ```
//!
//! Blank lines and lines starting with `#` are ignored in `edges.tsv`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diff::DenseMatrix;
use crate::error::{NclaError, Result};
use crate::graph::{EdgeStats, Graph};

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| NclaError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> NclaError {
    NclaError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let (graph, stats) = load_graph_with_stats(dir)?;
    if stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s) from edge list",
            graph.name(),
            stats.self_loops_dropped
        );
    }
    Ok(graph)
}

pub fn load_graph_with_stats(dir: impl AsRef<Path>) -> Result<(Graph, EdgeStats)> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta: GraphMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.num_nodes == 0 || meta.num_features == 0 {
        return Err(parse_err(&meta_path, 1, "num_nodes and num_features must be positive"));
    }

    let features = read_features(&dir.join(FEATURES_FILE), meta.num_nodes, meta.num_features)?;
    let edges = read_edges(&dir.join(EDGES_FILE), meta.num_nodes)?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, meta.num_nodes, meta.num_classes)?)
    } else {
        None
    };
    Graph::from_edges(meta.name, features, edges, labels)
}

fn read_features(path: &Path, n: usize, f: usize) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut data = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        if rows > n {
            continue;
        }
        let mut count = 0;
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad real {:?} in column {}", field.trim(), col)))?;
            if !v.is_finite() {
                return Err(NclaError::NonFiniteFeature {
                    path: path.to_path_buf(),
                    line: lineno,
                    column: col,
                });
            }
            data.push(v);
            count += 1;
        }
        if count != f {
            return Err(NclaError::DimensionMismatch {
                path: path.to_path_buf(),
                what: "features per row",
                expected: f,
                found: count,
            });
        }
    }
    if rows != n {
        return Err(NclaError::DimensionMismatch {
            path: path.to_path_buf(),
            what: "feature rows",
            expected: n,
            found: rows,
        });
    }
    DenseMatrix::from_vec(n, f, data)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut endpoint = || -> Result<usize> {
            let field = fields
                .next()
                .ok_or_else(|| parse_err(path, lineno, "expected two node ids"))?;
            let idx: usize = field
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad node id {field:?}")))?;
            if idx >= n {
                return Err(NclaError::EdgeOutOfRange {
                    path: path.to_path_buf(),
                    line: lineno,
                    index: idx,
                    num_nodes: n,
                });
            }
            Ok(idx)
        };
        let a = endpoint()?;
        let b = endpoint()?;
        if fields.next().is_some() {
            return Err(parse_err(path, lineno, "expected exactly two node ids"));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn read_labels(path: &Path, n: usize, num_classes: Option<usize>) -> Result<(Vec<usize>, usize)> {
    let text = read(path)?;
    let mut labels = Vec::with_capacity(n);
    let mut lines = Vec::with_capacity(n);
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label: usize = line
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad label {line:?}")))?;
        labels.push(label);
        lines.push(idx + 1);
    }
    if labels.len() != n {
        return Err(NclaError::DimensionMismatch {
            path: path.to_path_buf(),
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    let c = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    if let Some(pos) = labels.iter().position(|&l| l >= c) {
        return Err(NclaError::LabelOutOfRange {
            path: path.to_path_buf(),
            line: lines[pos],
            label: labels[pos],
            num_classes: c,
        });
    }
    Ok((labels, c))
}

/// Writes `g` in GraphPack layout; each undirected edge is listed once.
pub fn write_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NclaError::io(dir, e))?;
    let meta = GraphMeta {
        name: g.name().to_string(),
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| NclaError::io(&meta_path, e))?;

    write_lines(dir.join(EDGES_FILE), |w| {
        for (a, b) in g.undirected_edges() {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    })?;
    write_lines(dir.join(FEATURES_FILE), |w| {
        let x = g.features();
        for r in 0..x.rows() {
            let row: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    if let Some(labels) = g.labels() {
        write_lines(dir.join(LABELS_FILE), |w| {
            for l in labels {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_lines(path: PathBuf, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(&path).map_err(|e| NclaError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| NclaError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pack(dir: &Path, meta: &str, edges: &str, features: &str, labels: Option<&str>) {
        fs::write(dir.join(META_FILE), meta).unwrap();
        fs::write(dir.join(EDGES_FILE), edges).unwrap();
        fs::write(dir.join(FEATURES_FILE), features).unwrap();
        if let Some(l) = labels {
            fs::write(dir.join(LABELS_FILE), l).unwrap();
        }
    }

    const META2: &str = r#"{"name":"tiny","num_nodes":2,"num_features":1,"num_classes":2}"#;

    #[test]
    fn two_node_pack() {
        let tmp = tempfile::tempdir().unwrap();
        write_pack(tmp.path(), META2, "0 1\n", "0.5\n-1.5\n", Some("0\n1\n"));
        let g = load_graph(tmp.path()).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.labels().unwrap(), &[0, 1]);
    }

    #[test]
    fn duplicate_and_self_loop_lines() {
        let tmp = tempfile::tempdir().unwrap();
        write_pack(tmp.path(), META2, "# comment\n0\t1\n0 1\n1 1\n", "0\n1\n", None);
        let (g, stats) = load_graph_with_stats(tmp.path()).unwrap();
        assert_eq!(g.num_directed_entries(), 2);
        assert_eq!(stats.self_loops_dropped, 1);
        assert!(g.labels().is_none());
    }

    #[test]
    fn distinct_errors_with_context() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path();
        assert!(matches!(load_graph(p), Err(NclaError::Io { .. })));

        write_pack(p, META2, "0 1\n0 5\n", "0\n1\n", None);
        match load_graph(p) {
            Err(NclaError::EdgeOutOfRange { line: 2, index: 5, .. }) => {}
            other => panic!("{other:?}"),
        }

        write_pack(p, META2, "0 1\n", "0\nNaN\n", None);
        match load_graph(p) {
            Err(NclaError::NonFiniteFeature { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }

        write_pack(p, META2, "0 1\n", "0\n1\n", Some("0\n7\n"));
        match load_graph(p) {
            Err(NclaError::LabelOutOfRange { line: 2, label: 7, .. }) => {}
            other => panic!("{other:?}"),
        }

        write_pack(p, META2, "0 1\n", "0\n1\n2\n", Some("0\n1\n"));
        assert!(matches!(load_graph(p), Err(NclaError::DimensionMismatch { .. })));

        write_pack(p, META2, "0 x\n", "0\n1\n", Some("0\n1\n"));
        assert!(matches!(load_graph(p), Err(NclaError::Parse { line: 1, .. })));
    }
}
