//! Dataset directory format.
//!
//! ```text
//! schema.json            node types + counts, relations, meta-paths, target type
//! edges_<relation>.tsv   "src<TAB>dst", 0-based
//! features_<type>.csv    one comma-separated row per node (optional)
//! labels.tsv             "node<TAB>class" (optional)
//! splits.json            {"name": {"train": [...], "val": [...], "test": [...]}} (optional)
//! ```
//!
//! The `parse_*` functions take file contents so they can be driven directly
//! by fuzzers; `load_dataset` only adds file access on top.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{HeteroGraph, MetaPathSpec, NodeType, Relation, RelationSpec, SparseAdj, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub node_types: Vec<NodeType>,
    pub relations: Vec<RelationSpec>,
    pub metapaths: Vec<MetaPathSpec>,
    pub target_type: String,
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    serde_json::from_str(text).map_err(|e| Error::parse("schema.json", e.line(), e.to_string()))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_index(file: &str, line: usize, tok: &str, bound: usize, what: &str) -> Result<usize> {
    let v: usize = tok
        .parse()
        .map_err(|_| Error::parse(file, line, format!("invalid {what} `{tok}`")))?;
    if v >= bound {
        return Err(Error::parse(file, line, format!("{what} {v} out of range (< {bound})")));
    }
    Ok(v)
}

/// Parses an edge list into a `rows x cols` {0,1} adjacency.
pub fn parse_edges(text: &str, file: &str, rows: usize, cols: usize) -> Result<SparseAdj> {
    let mut edges = Vec::new();
    for (ln, line) in data_lines(text) {
        let mut it = line.split_whitespace();
        let (Some(s), Some(d), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(file, ln, "expected two integer columns"));
        };
        edges.push((
            parse_index(file, ln, s, rows, "source index")?,
            parse_index(file, ln, d, cols, "destination index")?,
        ));
    }
    SparseAdj::from_edges(rows, cols, edges)
}

/// Parses a feature matrix with exactly `rows` rows of equal width.
pub fn parse_features(text: &str, file: &str, rows: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (ln, line) in data_lines(text) {
        let before = data.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(file, ln, format!("invalid decimal `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(file, ln, "non-finite feature value"));
            }
            data.push(v);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(prev) if prev != w => {
                return Err(Error::parse(file, ln, format!("row has {w} columns, expected {prev}")))
            }
            _ => {}
        }
        n += 1;
    }
    if n != rows {
        return Err(Error::parse(file, n, format!("found {n} rows, expected {rows}")));
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data)
        .map_err(|e| Error::parse(file, 0, e.to_string()))
}

/// Parses `node<TAB>class` lines; every node in `0..n` must appear exactly once.
pub fn parse_labels(text: &str, file: &str, n: usize) -> Result<Vec<usize>> {
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (ln, line) in data_lines(text) {
        let mut it = line.split_whitespace();
        let (Some(node), Some(class), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(file, ln, "expected `node class`"));
        };
        let node = parse_index(file, ln, node, n, "node index")?;
        let class: usize = class
            .parse()
            .map_err(|_| Error::parse(file, ln, format!("invalid class `{class}`")))?;
        if class > u32::MAX as usize {
            return Err(Error::parse(file, ln, "class index too large"));
        }
        if labels[node].replace(class).is_some() {
            return Err(Error::parse(file, ln, format!("duplicate label for node {node}")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::parse(file, 0, format!("node {i} has no label"))))
        .collect()
}

pub fn parse_splits(text: &str) -> Result<BTreeMap<String, Split>> {
    serde_json::from_str(text).map_err(|e| Error::parse("splits.json", e.line(), e.to_string()))
}

fn read(dir: &Path, name: &str) -> Result<Option<String>> {
    let p = dir.join(name);
    match fs::read_to_string(&p) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(p, e)),
    }
}

/// Assembles a graph from already-read file contents; `read_file` returns
/// `None` for missing optional files.
pub fn assemble(schema: Schema, mut read_file: impl FnMut(&str) -> Result<Option<String>>) -> Result<HeteroGraph> {
    let count = |ty: &str| {
        schema
            .node_types
            .iter()
            .find(|t| t.name == ty)
            .map(|t| t.count)
            .ok_or_else(|| Error::Schema(format!("unknown node type `{ty}`")))
    };
    let mut relations = BTreeMap::new();
    for spec in &schema.relations {
        let file = format!("edges_{}.tsv", spec.name);
        let (rows, cols) = (count(&spec.src)?, count(&spec.dst)?);
        let text = read_file(&file)?.ok_or_else(|| Error::parse(&file, 0, "missing edge file"))?;
        let adj = parse_edges(&text, &file, rows, cols)?;
        if relations
            .insert(spec.name.clone(), Relation { spec: spec.clone(), adj })
            .is_some()
        {
            return Err(Error::Schema(format!("duplicate relation `{}`", spec.name)));
        }
    }
    let mut features = BTreeMap::new();
    for t in &schema.node_types {
        let file = format!("features_{}.csv", t.name);
        if let Some(text) = read_file(&file)? {
            features.insert(t.name.clone(), parse_features(&text, &file, t.count)?);
        }
    }
    let n_target = count(&schema.target_type)?;
    let labels = read_file("labels.tsv")?
        .map(|t| parse_labels(&t, "labels.tsv", n_target))
        .transpose()?;
    let splits = read_file("splits.json")?
        .map(|t| parse_splits(&t))
        .transpose()?
        .unwrap_or_default();
    let g = HeteroGraph {
        node_types: schema.node_types,
        relations,
        features,
        target_type: schema.target_type,
        metapaths: schema.metapaths,
        labels,
        splits,
    };
    g.validate()?;
    Ok(g)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<HeteroGraph> {
    let dir = dir.as_ref();
    let text = read(dir, "schema.json")?
        .ok_or_else(|| Error::io(dir.join("schema.json"), std::io::ErrorKind::NotFound.into()))?;
    assemble(parse_schema(&text)?, |name| read(dir, name))
}

pub fn schema_of(graph: &HeteroGraph) -> Schema {
    Schema {
        node_types: graph.node_types.clone(),
        relations: graph.relations.values().map(|r| r.spec.clone()).collect(),
        metapaths: graph.metapaths.clone(),
        target_type: graph.target_type.clone(),
    }
}

pub fn format_edges(adj: &SparseAdj) -> String {
    let mut s = String::new();
    for (r, c, _) in adj.iter() {
        let _ = writeln!(s, "{r}\t{c}");
    }
    s
}

/// Shortest round-trip decimal form per value.
pub fn format_features(m: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn save_dataset(graph: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("schema.json", serde_json::to_string_pretty(&schema_of(graph))? + "\n")?;
    for rel in graph.relations.values() {
        write(&format!("edges_{}.tsv", rel.spec.name), format_edges(&rel.adj))?;
    }
    for (ty, m) in &graph.features {
        write(&format!("features_{ty}.csv"), format_features(m))?;
    }
    if let Some(labels) = &graph.labels {
        let mut s = String::new();
        for (i, l) in labels.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{l}");
        }
        write("labels.tsv", s)?;
    }
    if !graph.splits.is_empty() {
        write("splits.json", serde_json::to_string_pretty(&graph.splits)? + "\n")?;
    }
    Ok(())
}

/// Coordinate-list dump: a `# <matrix> <metapath> <rows> <cols>` header,
/// then `row<TAB>col<TAB>value` lines.
pub fn format_coo(adj: &SparseAdj, matrix: &str, metapath: &str) -> String {
    let mut s = format!("# {matrix} {metapath} {} {}\n", adj.rows(), adj.cols());
    for (r, c, v) in adj.iter() {
        let _ = writeln!(s, "{r}\t{c}\t{v:?}");
    }
    s
}

/// Inverse of [`format_coo`]; returns `(matrix name, metapath, adjacency)`.
pub fn parse_coo(text: &str, file: &str) -> Result<(String, String, SparseAdj)> {
    let mut lines = data_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(file, 0, "empty matrix dump"))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(file, hl, "missing `#` header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [matrix, metapath, rows, cols] = parts[..] else {
        return Err(Error::parse(file, hl, "header must be `# matrix metapath rows cols`"));
    };
    let rows: usize = rows.parse().map_err(|_| Error::parse(file, hl, "invalid row count"))?;
    let cols: usize = cols.parse().map_err(|_| Error::parse(file, hl, "invalid column count"))?;
    let mut trip = Vec::new();
    for (ln, line) in lines {
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(Error::parse(file, ln, "expected `row col value`"));
        };
        let r = parse_index(file, ln, r, rows, "row")?;
        let c = parse_index(file, ln, c, cols, "column")?;
        let v: f64 = v.parse().map_err(|_| Error::parse(file, ln, format!("invalid value `{v}`")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::parse(file, ln, "weights must be finite and nonnegative"));
        }
        trip.push((r, c, v));
    }
    Ok((matrix.to_string(), metapath.to_string(), SparseAdj::from_triplets(rows, cols, trip)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"{
        "node_types": [{"name": "author", "count": 3}, {"name": "paper", "count": 4}],
        "relations": [
            {"name": "AP", "src": "author", "dst": "paper"},
            {"name": "PA", "src": "paper", "dst": "author"}
        ],
        "metapaths": [{"name": "APA", "relation_chain": ["AP", "PA"]}],
        "target_type": "author"
    }"#;

    fn files(name: &str) -> Result<Option<String>> {
        Ok(match name {
            "edges_AP.tsv" => Some("0\t0\n0\t1\n1\t1\n1\t2\n".into()),
            "edges_PA.tsv" => Some("0 0\n1 0\n1 1\n2 1\n".into()),
            "features_paper.csv" => Some("1,0\n0,1\n0.5,0.5\n-1e-3,2\n".into()),
            _ => None,
        })
    }

    #[test]
    fn assembles_toy_directory() {
        let g = assemble(parse_schema(SCHEMA).unwrap(), files).unwrap();
        assert_eq!(g.node_types.len(), 2);
        assert_eq!(g.relations.len(), 1 + 1);
        assert_eq!(g.metapaths.len(), 1);
        assert!(!g.features.contains_key("author"));
        assert_eq!(g.features["paper"].dim(), (4, 2));
        let apa = g.compose_metapath_adjacency(&g.metapaths[0]).unwrap();
        assert_eq!(apa.iter().map(|(r, c, _)| (r, c)).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn parse_errors_carry_file_and_line() {
        match parse_edges("0 1\n0 x\n", "edges_AP.tsv", 3, 4) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, "edges_AP.tsv");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_edges("5 1\n", "e", 3, 4).is_err());
        assert!(parse_features("1,2\n3\n", "f", 2).is_err());
        assert!(parse_features("1,2\n", "f", 2).is_err());
        assert!(parse_labels("0 1\n0 2\n", "l", 2).is_err());
        assert!(parse_labels("0 1\n", "l", 2).is_err());
    }

    #[test]
    fn bad_metapath_chain_is_schema_error() {
        let bad = SCHEMA.replace(r#"["AP", "PA"]"#, r#"["AP", "AP"]"#);
        let r = assemble(parse_schema(&bad).unwrap(), files);
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn coo_dump_round_trips() {
        let a = SparseAdj::from_triplets(3, 3, [(0, 1, 0.25), (2, 0, 1.0 / 3.0)]).unwrap();
        let text = format_coo(&a, "pathsim", "APA");
        let (m, mp, b) = parse_coo(&text, "dump").unwrap();
        assert_eq!((m.as_str(), mp.as_str()), ("pathsim", "APA"));
        assert_eq!(a, b);
    }
}
