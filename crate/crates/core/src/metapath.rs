//! Meta-path analytics: PathSim, top-K filtering, normalization, fusion, and
//! positive-pair construction from meta-path connection counts.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::SparseAdj;

/// PathSim scores over target nodes for one meta-path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub scores: SparseAdj,
    /// Pairs with a connecting path but `c_ii + c_jj = 0`, scored as 0.
    pub degenerate_pairs: usize,
}

/// `PS(i,j) = 2 c_ij / (c_ii + c_jj)`, evaluated on the support of `counts`.
pub fn pathsim_matrix(counts: &SparseAdj) -> Result<SimilarityMatrix> {
    if !counts.is_square() {
        return Err(Error::dim("pathsim_matrix", format!("counts {:?} not square", counts.shape())));
    }
    let diag: Vec<f64> = (0..counts.rows()).map(|i| counts.get(i, i)).collect();
    let mut degenerate = 0;
    let scores = counts.filter_map(|i, j, c| {
        let denom = diag[i] + diag[j];
        if denom > 0.0 {
            let s = 2.0 * c / denom;
            (s > 0.0).then_some(s)
        } else {
            degenerate += 1;
            None
        }
    });
    Ok(SimilarityMatrix { scores, degenerate_pairs: degenerate })
}

/// Orders `(index, score)` by descending score, then ascending index.
fn by_score_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Keeps the `k` largest off-diagonal scores per row; not symmetrized.
pub fn topk_filter(sim: &SimilarityMatrix, k: usize) -> Result<SparseAdj> {
    if k == 0 {
        return Err(Error::Config("K_sim must be at least 1".into()));
    }
    let s = &sim.scores;
    let mut trip = Vec::new();
    for r in 0..s.rows() {
        let (cols, vals) = s.row(r);
        let mut cand: Vec<(usize, f64)> = cols
            .iter()
            .zip(vals)
            .filter(|(&c, &v)| c != r && v > 0.0)
            .map(|(&c, &v)| (c, v))
            .collect();
        cand.sort_by(by_score_then_index);
        cand.truncate(k);
        trip.extend(cand.into_iter().map(|(c, v)| (r, c, v)));
    }
    SparseAdj::from_triplets(s.rows(), s.cols(), trip)
}

/// `D^{-1/2} A D^{-1/2}` with `D_ii` the weighted row sum; zero-degree rows
/// and columns contribute nothing.
pub fn sym_normalize(adj: &SparseAdj) -> Result<SparseAdj> {
    if !adj.is_square() {
        return Err(Error::dim("sym_normalize", format!("{:?} not square", adj.shape())));
    }
    let inv_sqrt: Vec<f64> = adj
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    Ok(adj
        .filter_map(|i, j, v| {
            let w = v * inv_sqrt[i] * inv_sqrt[j];
            (w != 0.0).then_some(w)
        }))
}

/// Entrywise `Σ α_φ Ã_φ`.
pub fn fuse_adjacency(norm_adjs: &[SparseAdj], alpha: &[f64]) -> Result<SparseAdj> {
    if norm_adjs.is_empty() || norm_adjs.len() != alpha.len() {
        return Err(Error::dim(
            "fuse_adjacency",
            format!("{} matrices, {} weights", norm_adjs.len(), alpha.len()),
        ));
    }
    let (r, c) = norm_adjs[0].shape();
    let mut trip = Vec::new();
    for (a, &w) in norm_adjs.iter().zip(alpha) {
        if a.shape() != (r, c) {
            return Err(Error::dim("fuse_adjacency", format!("{:?} vs {:?}", a.shape(), (r, c))));
        }
        trip.extend(a.iter().map(|(i, j, v)| (i, j, v * w)));
    }
    SparseAdj::from_triplets(r, c, trip)
}

/// `C_i(j) = Σ_φ 1(j ∈ N_i^φ)` over boolean meta-path adjacencies, diagonal excluded.
pub fn metapath_connection_counts(metapath_adjs: &[SparseAdj]) -> Result<SparseAdj> {
    let first = metapath_adjs
        .first()
        .ok_or_else(|| Error::Config("at least one meta-path is required".into()))?;
    let (r, c) = first.shape();
    let mut trip = Vec::new();
    for a in metapath_adjs {
        if a.shape() != (r, c) {
            return Err(Error::dim("metapath_connection_counts", format!("{:?} vs {:?}", a.shape(), (r, c))));
        }
        trip.extend(a.iter().filter(|&(i, j, v)| i != j && v > 0.0).map(|(i, j, _)| (i, j, 1.0)));
    }
    SparseAdj::from_triplets(r, c, trip)
}

/// Boolean positive-pair matrix over target nodes. Row `i` is the sorted
/// positive set of anchor `i`, which always contains `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosMatrix {
    rows: Vec<Vec<usize>>,
}

impl PosMatrix {
    pub fn identity(n: usize) -> Self {
        PosMatrix { rows: (0..n).map(|i| vec![i]).collect() }
    }

    /// Builds from arbitrary row sets; diagonal is forced in.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut out = Vec::with_capacity(n);
        for (i, mut r) in rows.into_iter().enumerate() {
            if r.iter().any(|&j| j >= n) {
                return Err(Error::dim("PosMatrix", format!("row {i} has an index >= {n}")));
            }
            r.push(i);
            r.sort_unstable();
            r.dedup();
            out.push(r);
        }
        Ok(PosMatrix { rows: out })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_sparse(&self) -> SparseAdj {
        let n = self.len();
        SparseAdj::from_edges(n, n, self.iter()).expect("indices validated on construction")
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    /// Row-wise union.
    pub fn union(&self, other: &PosMatrix) -> Result<PosMatrix> {
        if self.len() != other.len() {
            return Err(Error::dim("PosMatrix union", format!("{} vs {}", self.len(), other.len())));
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut r = a.clone();
                r.extend_from_slice(b);
                r
            })
            .collect();
        PosMatrix::from_rows(rows)
    }

    /// Boolean product `(self · rhs) > 0`.
    fn bool_product(&self, rhs: &PosMatrix) -> PosMatrix {
        let n = self.len();
        let mut mark = vec![usize::MAX; n];
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                for &k in &self.rows[i] {
                    for &j in &rhs.rows[k] {
                        if mark[j] != i {
                            mark[j] = i;
                            r.push(j);
                        }
                    }
                }
                r.sort_unstable();
                r
            })
            .collect();
        PosMatrix { rows }
    }
}

/// Per row: the `t_pos` targets with the highest connection count (ties to
/// the smaller index), plus the anchor itself.
pub fn build_positive_matrix(counts: &SparseAdj, t_pos: usize) -> Result<PosMatrix> {
    if !counts.is_square() {
        return Err(Error::dim("build_positive_matrix", format!("{:?} not square", counts.shape())));
    }
    let rows = (0..counts.rows())
        .map(|i| {
            let (cols, vals) = counts.row(i);
            let mut cand: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(&j, &v)| j != i && v != 0.0)
                .map(|(&j, &v)| (j, v))
                .collect();
            cand.sort_by(by_score_then_index);
            cand.truncate(t_pos);
            cand.into_iter().map(|(j, _)| j).collect()
        })
        .collect();
    PosMatrix::from_rows(rows)
}

/// `P_combined = ⋁_{t=1..k} P^(t)` with `P^(t) = (P^(t-1) · P) > 0`.
pub fn khop_combine(p: &PosMatrix, k: usize) -> Result<PosMatrix> {
    if k == 0 {
        return Err(Error::Config("hop count k must be at least 1".into()));
    }
    let mut combined = p.clone();
    let mut power = p.clone();
    for _ in 2..=k {
        let next = power.bool_product(p);
        if next == power {
            break;
        }
        combined = combined.union(&next)?;
        power = next;
    }
    Ok(combined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_from_rows(rows: &[&[f64]]) -> SimilarityMatrix {
        let n = rows.len();
        let trip = rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, &v)| v > 0.0).map(move |(j, &v)| (i, j, v)));
        SimilarityMatrix { scores: SparseAdj::from_triplets(n, n, trip).unwrap(), degenerate_pairs: 0 }
    }

    #[test]
    fn pathsim_on_two_author_toy() {
        // a1 writes p1,p2; a2 writes p2,p3.
        let ap = SparseAdj::from_edges(2, 3, [(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap();
        let counts = ap.matmul(&ap.transpose()).unwrap();
        let ps = pathsim_matrix(&counts).unwrap();
        assert_eq!(ps.scores.get(0, 1), 0.5);
        assert_eq!(ps.scores.get(1, 0), 0.5);
        assert_eq!(ps.scores.get(0, 0), 1.0);
    }

    #[test]
    fn pathsim_flags_degenerate_pairs() {
        let counts = SparseAdj::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        let ps = pathsim_matrix(&counts).unwrap();
        assert_eq!(ps.degenerate_pairs, 1);
        assert_eq!(ps.scores.nnz(), 0);
    }

    #[test]
    fn topk_breaks_ties_by_index() {
        let sim = sim_from_rows(&[&[1.0, 0.9, 0.5, 0.5, 0.1], &[0.0; 5], &[0.0; 5], &[0.0; 5], &[0.0; 5]]);
        let f = topk_filter(&sim, 2).unwrap();
        assert_eq!(f.row(0), (&[1usize, 2][..], &[0.9, 0.5][..]));
        assert_eq!(f.row_nnz(1), 0);
        let all = topk_filter(&sim, 10).unwrap();
        assert_eq!(all.row(0).0, &[1, 2, 3, 4]);
    }

    #[test]
    fn sym_normalize_cases() {
        let pair = SparseAdj::from_edges(2, 2, [(0, 1), (1, 0)]).unwrap();
        let n = sym_normalize(&pair).unwrap();
        assert_eq!(n.get(0, 1), 1.0);
        assert_eq!(n.get(1, 0), 1.0);

        let star = SparseAdj::from_edges(4, 4, [(0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0)]).unwrap();
        let n = sym_normalize(&star).unwrap();
        assert!((n.get(0, 2) - 1.0 / 3f64.sqrt()).abs() < 1e-15);

        assert_eq!(sym_normalize(&SparseAdj::zeros(3, 3)).unwrap().nnz(), 0);
    }

    #[test]
    fn fusion_cases() {
        let a = SparseAdj::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        let b = SparseAdj::from_triplets(2, 2, [(1, 0, 2.0)]).unwrap();
        assert_eq!(fuse_adjacency(&[a.clone()], &[1.0]).unwrap(), a);
        let same = fuse_adjacency(&[a.clone(), a.clone()], &[0.25, 0.75]).unwrap();
        assert_eq!(same, a);
        let u = fuse_adjacency(&[a.clone(), b], &[0.3, 0.7]).unwrap();
        assert_eq!(u.get(0, 1), 0.3);
        assert!((u.get(1, 0) - 1.4).abs() < 1e-15);
        assert!(fuse_adjacency(&[a, SparseAdj::zeros(3, 3)], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn connection_counts_sum_indicators() {
        let a = SparseAdj::from_edges(3, 3, [(0, 1), (0, 2), (0, 0)]).unwrap();
        let b = SparseAdj::from_edges(3, 3, [(0, 1)]).unwrap();
        let c = SparseAdj::from_edges(3, 3, []).unwrap();
        let k = metapath_connection_counts(&[a, b, c]).unwrap();
        assert_eq!(k.get(0, 1), 2.0);
        assert_eq!(k.get(0, 2), 1.0);
        assert!(!k.contains(0, 0));
        assert!(!k.contains(1, 2));
    }

    #[test]
    fn positive_selection() {
        let counts = SparseAdj::from_triplets(5, 5, [(0, 1, 3.0), (0, 2, 2.0), (0, 3, 2.0), (0, 4, 1.0)]).unwrap();
        let p = build_positive_matrix(&counts, 2).unwrap();
        assert_eq!(p.row(0), &[0, 1, 2]);
        assert_eq!(p.row(1), &[1]);
        let p = build_positive_matrix(&counts, 10).unwrap();
        assert_eq!(p.row(0), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn khop_adds_two_hop_chain() {
        let p = PosMatrix::from_rows(vec![vec![1], vec![2], vec![]]).unwrap();
        assert_eq!(khop_combine(&p, 1).unwrap(), p);
        let k2 = khop_combine(&p, 2).unwrap();
        assert!(k2.contains(0, 2));
        let closed = PosMatrix::from_rows(vec![vec![1], vec![0], vec![]]).unwrap();
        assert_eq!(khop_combine(&closed, 5).unwrap(), closed);
    }
}
