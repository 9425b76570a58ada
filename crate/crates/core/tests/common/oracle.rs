//! Definitional reference computations, written independently of the
//! library code paths they check.

use std::collections::{BTreeMap, VecDeque};

use hetcrf::cluster::{deviated_nodes, Clustering};
use hetcrf::eval::{ari, binary_auc, macro_f1, micro_f1, nmi};
use hetcrf::graph::{HeteroGraph, MetaPathSpec, NodeType, Relation, RelationSpec};
use hetcrf::metapath::{khop_combine, pathsim_matrix, PosMatrix};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{adj, mat, posmatrix, rng};

fn relation(name: &str, src: &str, dst: &str, a: hetcrf::graph::SparseAdj) -> (String, Relation) {
    (name.into(), Relation { spec: RelationSpec { name: name.into(), src: src.into(), dst: dst.into() }, adj: a })
}

/// Types `a` (target), `b`, `c`; relations `ab`, `bc`; meta-paths `a-b-a`
/// and `a-b-c-b-a`.
pub fn chain_graph(r: &mut ChaCha8Rng, na: usize, nb: usize, nc: usize, p: f64) -> HeteroGraph {
    let relations = [relation("ab", "a", "b", adj(r, na, nb, p)), relation("bc", "b", "c", adj(r, nb, nc, p))]
        .into_iter()
        .collect();
    HeteroGraph {
        node_types: [("a", na), ("b", nb), ("c", nc)].map(|(n, c)| NodeType { name: n.into(), count: c }).to_vec(),
        relations,
        features: BTreeMap::new(),
        target_type: "a".into(),
        metapaths: vec![
            MetaPathSpec { name: "aba".into(), relation_chain: vec!["ab".into(), "~ab".into()] },
            MetaPathSpec { name: "abcba".into(), relation_chain: ["ab", "bc", "~bc", "~ab"].map(String::from).to_vec() },
        ],
        labels: None,
        splits: BTreeMap::new(),
    }
}

/// Path-instance counts by walking every node sequence along the chain.
pub fn enumerate_paths(g: &HeteroGraph, mp: &MetaPathSpec) -> Array2<f64> {
    let steps: Vec<(Array2<f64>, bool)> = mp
        .relation_chain
        .iter()
        .map(|s| match s.strip_prefix('~') {
            Some(n) => (g.relations[n].adj.to_dense(), true),
            None => (g.relations[s.as_str()].adj.to_dense(), false),
        })
        .collect();
    let n = g.target_count();
    let mut out = Array2::zeros((n, n));
    fn walk(steps: &[(Array2<f64>, bool)], at: usize, start: usize, out: &mut Array2<f64>) {
        let Some(((m, rev), rest)) = steps.split_first() else {
            out[[start, at]] += 1.0;
            return;
        };
        let width = if *rev { m.nrows() } else { m.ncols() };
        for next in 0..width {
            let linked = if *rev { m[[next, at]] } else { m[[at, next]] } != 0.0;
            if linked {
                walk(rest, next, start, out);
            }
        }
    }
    for s in 0..n {
        walk(&steps, s, s, &mut out);
    }
    out
}

pub fn check_composition(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (na, nb, nc) = (r.gen_range(1..9), r.gen_range(1..9), r.gen_range(1..9));
    let p = r.gen_range(0.1..0.6);
    let g = chain_graph(&mut r, na, nb, nc, p);
    for mp in &g.metapaths {
        let want = enumerate_paths(&g, mp);
        let counts = g.count_metapath_paths(mp).map_err(|e| e.to_string())?.to_dense();
        if counts != want {
            return Err(format!("{}: path counts differ", mp.name));
        }
        let a = g.compose_metapath_adjacency(mp).map_err(|e| e.to_string())?.to_dense();
        let want_a = Array2::from_shape_fn((na, na), |(i, j)| if i != j && want[[i, j]] > 0.0 { 1.0 } else { 0.0 });
        if a != want_a {
            return Err(format!("{}: boolean adjacency differs", mp.name));
        }
    }
    Ok(())
}

/// PathSim on a random bipartite graph against pair-by-pair path counting.
pub fn check_pathsim(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (na, nb) = (r.gen_range(1..=30), r.gen_range(1..=30));
    let p = r.gen_range(0.02..0.5);
    let g = chain_graph(&mut r, na, nb, 1, p);
    let ab = g.relations["ab"].adj.to_dense();
    let mp = &g.metapaths[0];
    let sim = pathsim_matrix(&g.count_metapath_paths(mp).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let paths = |i: usize, j: usize| (0..nb).filter(|&b| ab[[i, b]] != 0.0 && ab[[j, b]] != 0.0).count() as f64;
    for i in 0..na {
        for j in 0..na {
            let (c, denom) = (paths(i, j), paths(i, i) + paths(j, j));
            let want = if denom > 0.0 { 2.0 * c / denom } else { 0.0 };
            let got = sim.scores.get(i, j);
            if got != want {
                return Err(format!("PS({i},{j}) = {got}, enumeration gives {want}"));
            }
        }
    }
    Ok(())
}

/// Nodes within `k` steps of each anchor along the rows of `p`.
pub fn bfs_within(p: &PosMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = p.len();
    (0..n)
        .map(|s| {
            let mut dist = vec![usize::MAX; n];
            let mut q = VecDeque::from([s]);
            dist[s] = 0;
            while let Some(u) = q.pop_front() {
                if dist[u] == k {
                    continue;
                }
                for &v in p.row(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            (0..n).filter(|&v| dist[v] <= k).collect()
        })
        .collect()
}

pub fn check_khop(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(1..=100);
    let extra = r.gen_range(0..4);
    let p = posmatrix(&mut r, n, extra);
    let k = r.gen_range(1..=4);
    let got = khop_combine(&p, k).map_err(|e| e.to_string())?;
    let want = bfs_within(&p, k);
    for i in 0..n {
        if got.row(i) != want[i].as_slice() {
            return Err(format!("n={n} k={k}: row {i} is {:?}, BFS gives {:?}", got.row(i), want[i]));
        }
    }
    Ok(())
}

/// Mean cosine distance to every node of another cluster, then the
/// `k_dev` largest per cluster (ties to the smaller index).
pub fn deviated_oracle(h: &Array2<f64>, assign: &[usize], k: usize, k_dev: usize) -> (Vec<Vec<usize>>, Vec<f64>) {
    let n = h.nrows();
    let norm = |i: usize| h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    let dist = |i: usize, j: usize| {
        let (a, b) = (norm(i), norm(j));
        if a == 0.0 || b == 0.0 {
            return 1.0;
        }
        let dot: f64 = (0..h.ncols()).map(|c| h[[i, c]] * h[[j, c]]).sum();
        1.0 - dot / (a * b)
    };
    let mean: Vec<f64> = (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| assign[j] != assign[i]).collect();
            if others.is_empty() {
                0.0
            } else {
                others.iter().map(|&j| dist(i, j)).sum::<f64>() / others.len() as f64
            }
        })
        .collect();
    let sets = (0..k)
        .map(|c| {
            let mut chosen = Vec::new();
            let mut pool: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            while chosen.len() < k_dev && !pool.is_empty() {
                let best = (0..pool.len())
                    .max_by(|&x, &y| mean[pool[x]].partial_cmp(&mean[pool[y]]).unwrap().then(pool[y].cmp(&pool[x])))
                    .unwrap();
                chosen.push(pool.remove(best));
            }
            chosen.sort_unstable();
            chosen
        })
        .collect();
    (sets, mean)
}

pub fn check_deviated(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(2..=200);
    let k = r.gen_range(1..=n.min(6));
    let d = r.gen_range(1..6);
    let mut h = mat(&mut r, n, d, -1.0, 1.0);
    if r.gen_bool(0.3) {
        h.row_mut(r.gen_range(0..n)).fill(0.0);
    }
    let mut assign: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.gen_range(0..k) }).collect();
    assign.swap(0, n - 1);
    let k_dev = r.gen_range(1..5);
    let c = Clustering { assignments: assign.clone(), centroids: Array2::zeros((k, d)), inertia: 0.0, iterations: 0, converged: true, seed };
    let got = deviated_nodes(&c, &h, k_dev).map_err(|e| e.to_string())?;
    let (sets, mean) = deviated_oracle(&h, &assign, k, k_dev);
    for (i, (a, b)) in got.mean_distance.iter().zip(&mean).enumerate() {
        if (a - b).abs() > 1e-12 {
            return Err(format!("mean distance of {i}: {a} vs {b}"));
        }
    }
    if got.sets != sets {
        return Err(format!("sets {:?} vs brute force {:?}", got.sets, sets));
    }
    Ok(())
}

pub fn f1_oracle(y: &[usize], pred: &[usize], k: usize) -> (f64, f64) {
    let per_class: Vec<f64> = (0..k)
        .map(|c| {
            let tp = y.iter().zip(pred).filter(|&(&a, &b)| a == c && b == c).count() as f64;
            let predicted = pred.iter().filter(|&&b| b == c).count() as f64;
            let actual = y.iter().filter(|&&a| a == c).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 }
        })
        .collect();
    // Micro-F1 from pooled counts over all classes.
    let tp: f64 = (0..k).map(|c| y.iter().zip(pred).filter(|&(&a, &b)| a == c && b == c).count() as f64).sum();
    let fp: f64 = (0..k).map(|c| y.iter().zip(pred).filter(|&(&a, &b)| a != c && b == c).count() as f64).sum();
    let fne: f64 = (0..k).map(|c| y.iter().zip(pred).filter(|&(&a, &b)| a == c && b != c).count() as f64).sum();
    (per_class.iter().sum::<f64>() / k as f64, 2.0 * tp / (2.0 * tp + fp + fne))
}

pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ka, kb) = (a.iter().max().unwrap() + 1, b.iter().max().unwrap() + 1);
    let mut joint = Array2::<f64>::zeros((ka, kb));
    for (&x, &y) in a.iter().zip(b) {
        joint[[x, y]] += 1.0;
    }
    joint /= n;
    let pa = joint.sum_axis(ndarray::Axis(1));
    let pb = joint.sum_axis(ndarray::Axis(0));
    let h = |p: &ndarray::Array1<f64>| -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
    let (ha, hb) = (h(&pa), h(&pb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for ((x, y), &p) in joint.indexed_iter() {
        if p > 0.0 {
            mi += p * (p / (pa[x] * pb[y])).ln();
        }
    }
    mi / ((ha + hb) / 2.0)
}

/// Hubert-Arabie ARI from the four pair categories, enumerating all pairs.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let denom = (both + only_a) * (only_a + neither) + (both + only_b) * (only_b + neither);
    if denom == 0.0 {
        return if only_a == 0.0 && only_b == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * (both * neither - only_a * only_b) / denom
}

pub fn auc_oracle(pos: &[bool], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in (0..pos.len()).filter(|&i| pos[i]) {
        for j in (0..pos.len()).filter(|&j| !pos[j]) {
            pairs += 1.0;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Largest absolute gap between library metrics and the oracles on one
/// random labeling pair.
pub fn metric_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..80);
    let k = r.gen_range(1..6);
    let y: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    let pred: Vec<usize> = (0..n).map(|i| if r.gen_bool(0.5) { y[i] } else { r.gen_range(0..k) }).collect();
    let (mf, mi) = f1_oracle(&y, &pred, k);
    let mut gap = (macro_f1(&y, &pred, k) - mf).abs().max((micro_f1(&y, &pred) - mi).abs());
    gap = gap.max((nmi(&y, &pred) - nmi_oracle(&y, &pred)).abs());
    gap = gap.max((ari(&y, &pred) - ari_oracle(&y, &pred)).abs());
    let pos: Vec<bool> = y.iter().map(|&c| c == 0).collect();
    // Coarse scores so ties occur.
    let scores: Vec<f64> = (0..n).map(|_| (r.gen_range(0..8) as f64) / 4.0).collect();
    if let Some(auc) = binary_auc(&pos, &scores) {
        gap = gap.max((auc - auc_oracle(&pos, &scores)).abs());
    }
    gap
}
