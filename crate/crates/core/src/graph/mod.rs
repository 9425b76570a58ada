//! Heterogeneous graph data model and meta-path composition.

pub mod io;
pub mod sparse;
pub mod synthetic;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use sparse::SparseAdj;

/// Prefix marking a relation traversed in reverse inside a meta-path chain.
pub const REVERSE_PREFIX: char = '~';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPathSpec {
    pub name: String,
    /// Relation names in traversal order; `~name` walks a relation backwards.
    pub relation_chain: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    #[serde(default)]
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Relation {
    pub spec: RelationSpec,
    pub adj: SparseAdj,
}

/// A node-feature matrix; absent features are realized as one-hot node
/// identity without materializing the identity.
#[derive(Debug, Clone, Copy)]
pub enum FeatureView<'a> {
    Dense(&'a Array2<f64>),
    Identity(usize),
}

impl FeatureView<'_> {
    pub fn rows(&self) -> usize {
        match self {
            FeatureView::Dense(m) => m.nrows(),
            FeatureView::Identity(n) => *n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureView::Dense(m) => m.ncols(),
            FeatureView::Identity(n) => *n,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            FeatureView::Dense(m) => (*m).clone(),
            FeatureView::Identity(n) => Array2::eye(*n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeteroGraph {
    pub node_types: Vec<NodeType>,
    pub relations: BTreeMap<String, Relation>,
    /// Raw features per node type; a missing key means ABSENT.
    pub features: BTreeMap<String, Array2<f64>>,
    pub target_type: String,
    pub metapaths: Vec<MetaPathSpec>,
    pub labels: Option<Vec<usize>>,
    pub splits: BTreeMap<String, Split>,
}

impl HeteroGraph {
    pub fn node_count(&self, ty: &str) -> Option<usize> {
        self.node_types.iter().find(|t| t.name == ty).map(|t| t.count)
    }

    pub fn target_count(&self) -> usize {
        self.node_count(&self.target_type).unwrap_or(0)
    }

    pub fn feature_view(&self, ty: &str) -> Result<FeatureView<'_>> {
        match self.features.get(ty) {
            Some(m) => Ok(FeatureView::Dense(m)),
            None => self
                .node_count(ty)
                .map(FeatureView::Identity)
                .ok_or_else(|| Error::Schema(format!("unknown node type `{ty}`"))),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Resolves one chain step to `(adjacency, src type, dst type)`.
    fn resolve_step(&self, step: &str) -> Result<(SparseAdj, &str, &str)> {
        let (name, reversed) = match step.strip_prefix(REVERSE_PREFIX) {
            Some(n) => (n, true),
            None => (step, false),
        };
        let rel = self
            .relations
            .get(name)
            .ok_or_else(|| Error::Schema(format!("unknown relation `{name}`")))?;
        Ok(if reversed {
            (rel.adj.transpose(), rel.spec.dst.as_str(), rel.spec.src.as_str())
        } else {
            (rel.adj.clone(), rel.spec.src.as_str(), rel.spec.dst.as_str())
        })
    }

    /// Checks type compatibility of a relation chain and returns its endpoint types.
    pub fn chain_types(&self, chain: &[String]) -> Result<(String, String)> {
        if chain.is_empty() {
            return Err(Error::Schema("empty relation chain".into()));
        }
        let mut start = None;
        let mut cur: Option<String> = None;
        for step in chain {
            let (_, src, dst) = self.resolve_step(step)?;
            if let Some(c) = &cur {
                if c != src {
                    return Err(Error::Schema(format!(
                        "chain step `{step}` starts at `{src}` but previous step ended at `{c}`"
                    )));
                }
            } else {
                start = Some(src.to_string());
            }
            cur = Some(dst.to_string());
        }
        Ok((start.unwrap(), cur.unwrap()))
    }

    /// Weighted product of a relation chain: entry (i, j) counts path instances.
    pub fn chain_product(&self, chain: &[String]) -> Result<SparseAdj> {
        self.chain_types(chain)?;
        let mut acc: Option<SparseAdj> = None;
        for step in chain {
            let (adj, _, _) = self.resolve_step(step)?;
            acc = Some(match acc {
                None => adj,
                Some(a) => a.matmul(&adj)?,
            });
        }
        Ok(acc.unwrap())
    }

    fn check_metapath(&self, spec: &MetaPathSpec) -> Result<()> {
        if spec.relation_chain.len() < 2 {
            return Err(Error::Schema(format!(
                "meta-path `{}` must have at least two relations",
                spec.name
            )));
        }
        let (s, e) = self.chain_types(&spec.relation_chain)?;
        if s != self.target_type || e != self.target_type {
            return Err(Error::Schema(format!(
                "meta-path `{}` runs {s} -> {e}, expected {t} -> {t}",
                spec.name,
                t = self.target_type
            )));
        }
        Ok(())
    }

    /// Path-instance counts under a meta-path, diagonal retained.
    pub fn count_metapath_paths(&self, spec: &MetaPathSpec) -> Result<SparseAdj> {
        self.check_metapath(spec)?;
        self.chain_product(&spec.relation_chain)
    }

    /// Boolean meta-path adjacency (≥ 1 path instance), self-loops removed.
    pub fn compose_metapath_adjacency(&self, spec: &MetaPathSpec) -> Result<SparseAdj> {
        Ok(self.count_metapath_paths(spec)?.to_binary().without_diagonal())
    }

    /// Relations incident on the target type whose other endpoint is a
    /// different type, grouped by that type, as target x neighbor incidence.
    pub fn heterogeneous_neighbors(&self) -> Result<BTreeMap<String, SparseAdj>> {
        let mut out: BTreeMap<String, SparseAdj> = BTreeMap::new();
        for rel in self.relations.values() {
            let (other, adj) = if rel.spec.src == self.target_type && rel.spec.dst != self.target_type {
                (rel.spec.dst.clone(), rel.adj.clone())
            } else if rel.spec.dst == self.target_type && rel.spec.src != self.target_type {
                (rel.spec.src.clone(), rel.adj.transpose())
            } else {
                continue;
            };
            let merged = match out.remove(&other) {
                Some(prev) => prev.add_scaled(&adj, 1.0)?.to_binary(),
                None => adj.to_binary(),
            };
            out.insert(other, merged);
        }
        Ok(out)
    }

    /// Validates every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.node_types {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Schema(format!("duplicate node type `{}`", t.name)));
            }
        }
        if self.node_count(&self.target_type).is_none() {
            return Err(Error::Schema(format!("unknown target type `{}`", self.target_type)));
        }
        for (name, rel) in &self.relations {
            if name != &rel.spec.name || name.starts_with(REVERSE_PREFIX) {
                return Err(Error::Schema(format!("bad relation name `{name}`")));
            }
            let rows = self
                .node_count(&rel.spec.src)
                .ok_or_else(|| Error::Schema(format!("relation `{name}`: unknown type `{}`", rel.spec.src)))?;
            let cols = self
                .node_count(&rel.spec.dst)
                .ok_or_else(|| Error::Schema(format!("relation `{name}`: unknown type `{}`", rel.spec.dst)))?;
            if rel.adj.shape() != (rows, cols) {
                return Err(Error::Schema(format!(
                    "relation `{name}` has shape {:?}, expected ({rows}, {cols})",
                    rel.adj.shape()
                )));
            }
            rel.adj.validate()?;
        }
        for (ty, feat) in &self.features {
            let n = self
                .node_count(ty)
                .ok_or_else(|| Error::Schema(format!("features for unknown type `{ty}`")))?;
            if feat.nrows() != n {
                return Err(Error::Schema(format!(
                    "features for `{ty}` have {} rows, expected {n}",
                    feat.nrows()
                )));
            }
            if feat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("features for `{ty}` contain non-finite values")));
            }
        }
        if self.metapaths.is_empty() {
            return Err(Error::Schema("no meta-paths declared".into()));
        }
        for mp in &self.metapaths {
            self.check_metapath(mp)?;
        }
        let n = self.target_count();
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Schema(format!(
                    "{} labels for {n} target nodes",
                    labels.len()
                )));
            }
        }
        for (name, split) in &self.splits {
            for &i in split.train.iter().chain(&split.val).chain(&split.test) {
                if i >= n {
                    return Err(Error::Schema(format!("split `{name}` index {i} out of range")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// a1 writes p1,p2; a2 writes p2,p3 ; a3 writes nothing.
    pub(crate) fn toy() -> HeteroGraph {
        let ap = SparseAdj::from_edges(3, 4, [(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap();
        let mut relations = BTreeMap::new();
        relations.insert(
            "AP".to_string(),
            Relation {
                spec: RelationSpec { name: "AP".into(), src: "author".into(), dst: "paper".into() },
                adj: ap.clone(),
            },
        );
        relations.insert(
            "PA".to_string(),
            Relation {
                spec: RelationSpec { name: "PA".into(), src: "paper".into(), dst: "author".into() },
                adj: ap.transpose(),
            },
        );
        HeteroGraph {
            node_types: vec![
                NodeType { name: "author".into(), count: 3 },
                NodeType { name: "paper".into(), count: 4 },
            ],
            relations,
            features: BTreeMap::new(),
            target_type: "author".into(),
            metapaths: vec![MetaPathSpec { name: "APA".into(), relation_chain: vec!["AP".into(), "PA".into()] }],
            labels: None,
            splits: BTreeMap::new(),
        }
    }

    #[test]
    fn toy_composition() {
        let g = toy();
        g.validate().unwrap();
        let apa = g.compose_metapath_adjacency(&g.metapaths[0]).unwrap();
        let edges: Vec<_> = apa.iter().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn toy_counts() {
        let g = toy();
        let c = g.count_metapath_paths(&g.metapaths[0]).unwrap();
        assert_eq!(c.get(0, 0), 2.0);
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(1, 1), 2.0);
        assert_eq!(c.get(0, 2), 0.0);
    }

    #[test]
    fn reversed_relation_matches_explicit() {
        let g = toy();
        let spec = MetaPathSpec { name: "x".into(), relation_chain: vec!["AP".into(), "~AP".into()] };
        assert_eq!(
            g.count_metapath_paths(&spec).unwrap(),
            g.count_metapath_paths(&g.metapaths[0]).unwrap()
        );
    }

    #[test]
    fn chain_mismatch_is_schema_error() {
        let g = toy();
        let bad = MetaPathSpec { name: "bad".into(), relation_chain: vec!["AP".into(), "AP".into()] };
        assert!(matches!(g.compose_metapath_adjacency(&bad), Err(Error::Schema(_))));
        let short = MetaPathSpec { name: "short".into(), relation_chain: vec![] };
        assert!(matches!(g.compose_metapath_adjacency(&short), Err(Error::Schema(_))));
    }

    #[test]
    fn no_shared_intermediate_gives_empty() {
        let mut g = toy();
        let ap = SparseAdj::from_edges(3, 4, [(0, 0), (1, 1), (2, 2)]).unwrap();
        g.relations.get_mut("AP").unwrap().adj = ap.clone();
        g.relations.get_mut("PA").unwrap().adj = ap.transpose();
        assert_eq!(g.compose_metapath_adjacency(&g.metapaths[0]).unwrap().nnz(), 0);
    }

    #[test]
    fn heterogeneous_neighbors_merge_both_directions() {
        let g = toy();
        let nb = g.heterogeneous_neighbors().unwrap();
        assert_eq!(nb.len(), 1);
        assert_eq!(nb["paper"].nnz(), 4);
    }
}
