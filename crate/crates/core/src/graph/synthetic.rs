//! Planted-partition heterogeneous graphs with ground-truth labels.
//!
//! Each meta-path gets its own intermediate node type. For every unordered
//! pair of target nodes, an intermediate node linking the pair is created
//! with probability `p_intra` (same class) or `p_inter` (different class),
//! so the composed meta-path adjacency is exactly a planted-partition graph
//! and every path instance count between distinct nodes is 0 or 1.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeteroGraph, MetaPathSpec, NodeType, Relation, RelationSpec, SparseAdj, Split};
use crate::error::{Error, Result};

pub const TARGET_TYPE: &str = "target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FeatureMode {
    /// One-hot rows over `classes * block` dims. With probability `signal`
    /// the hot index falls in the node's own class block, otherwise it is
    /// uniform over all dims; Gaussian noise of `noise_std` is added.
    NoisyOneHotClass {
        block: usize,
        signal: f64,
        #[serde(default)]
        noise_std: f64,
    },
    Absent,
}

/// Partial JSON is accepted; missing fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub metapaths: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub features: FeatureMode,
    /// Label rates (fractions of each class) that get a stratified split.
    pub label_rates: Vec<f64>,
}

fn default_label_rates() -> Vec<f64> {
    vec![0.2, 0.4, 0.6]
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 3,
            nodes_per_class: 100,
            metapaths: 2,
            p_intra: 0.04,
            p_inter: 0.005,
            features: FeatureMode::NoisyOneHotClass {
                block: 16,
                signal: 0.1,
                noise_std: 0.0,
            },
            label_rates: default_label_rates(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.classes == 0 || self.nodes_per_class == 0 || self.metapaths == 0 {
            return Err(Error::Config("classes, nodes_per_class and metapaths must be positive".into()));
        }
        if let FeatureMode::NoisyOneHotClass { block, signal, noise_std } = self.features {
            if block == 0 || !(0.0..=1.0).contains(&signal) || !(noise_std >= 0.0 && noise_std.is_finite()) {
                return Err(Error::Config("noisy-one-hot-class needs block > 0, signal in [0,1], noise_std >= 0".into()));
            }
        }
        if self.label_rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Config("label rates must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Split name used for a label rate, e.g. `0.4 -> "40"`.
pub fn split_name(rate: f64) -> String {
    format!("{}", (rate * 100.0).round() as i64)
}

/// Per-class stratified split: `rate` of each class to train, half of the
/// remainder to validation, the rest to test. Index lists are sorted.
pub fn stratified_split(labels: &[usize], rate: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut split = Split::default();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64) * rate).round() as usize;
        let n_val = (members.len() - n_train) / 2;
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<HeteroGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.classes * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();

    let mut node_types = vec![NodeType { name: TARGET_TYPE.into(), count: n }];
    let mut relations = BTreeMap::new();
    let mut metapaths = Vec::new();
    for m in 0..spec.metapaths {
        let mut edges = Vec::new();
        let mut mid = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { spec.p_intra } else { spec.p_inter };
                if rng.gen::<f64>() < p {
                    edges.push((i, mid));
                    edges.push((j, mid));
                    mid += 1;
                }
            }
        }
        let mid_type = format!("link{m}");
        let rel = format!("{TARGET_TYPE}_{mid_type}");
        node_types.push(NodeType { name: mid_type.clone(), count: mid });
        relations.insert(
            rel.clone(),
            Relation {
                spec: RelationSpec { name: rel.clone(), src: TARGET_TYPE.into(), dst: mid_type.clone() },
                adj: SparseAdj::from_edges(n, mid, edges)?,
            },
        );
        metapaths.push(MetaPathSpec {
            name: format!("T{m}T"),
            relation_chain: vec![rel.clone(), format!("{}{rel}", super::REVERSE_PREFIX)],
        });
    }

    let mut features = BTreeMap::new();
    if let FeatureMode::NoisyOneHotClass { block, signal, noise_std } = spec.features {
        let dim = spec.classes * block;
        let mut x = Array2::zeros((n, dim));
        for i in 0..n {
            let hot = if rng.gen::<f64>() < signal {
                labels[i] * block + rng.gen_range(0..block)
            } else {
                rng.gen_range(0..dim)
            };
            x[[i, hot]] = 1.0;
            if noise_std > 0.0 {
                for v in x.row_mut(i).iter_mut() {
                    *v += noise_std * standard_normal(&mut rng);
                }
            }
        }
        features.insert(TARGET_TYPE.to_string(), x);
    }

    let splits = spec
        .label_rates
        .iter()
        .enumerate()
        .map(|(k, &r)| (split_name(r), stratified_split(&labels, r, seed ^ (0x5eed_0000 + k as u64))))
        .collect();

    let g = HeteroGraph {
        node_types,
        relations,
        features,
        target_type: TARGET_TYPE.into(),
        metapaths,
        labels: Some(labels),
        splits,
    };
    g.validate()?;
    Ok(g)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps ln finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
