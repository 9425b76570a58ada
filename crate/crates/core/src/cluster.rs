//! K-means over embeddings and the cluster-based positive augmentation: the
//! nodes of each cluster that are farthest (mean cosine distance) from all
//! other clusters become extra positives for every member of that cluster.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metapath::PosMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Cluster index of each row.
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Member lists, each sorted.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(h: &Array2<f64>, s: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = h.nrows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(h.row(i), h.row(chosen[0]))).collect();
    while chosen.len() < s {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            // Guard against rounding landing on a zero-weight tail.
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // Every point coincides with a centroid: fall back to unchosen rows.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(h.row(i), h.row(next)));
        }
    }
    h.select(Axis(0), &chosen)
}

/// Lloyd's algorithm from a seeded k-means++ start. Empty clusters are
/// re-seeded with the point farthest from its own centroid.
pub fn kmeans(h: &Array2<f64>, s: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    let (n, d) = h.dim();
    if s == 0 || s > n {
        return Err(Error::Config(format!("cannot form {s} clusters from {n} points")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { op: "kmeans", detail: "non-finite embedding".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(h, s, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (c, dd) = nearest(h.row(i), &centroids);
            dist[i] = dd;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
        let mut sums = Array2::<f64>::zeros((s, d));
        let mut counts = vec![0usize; s];
        for (i, &c) in assignments.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &h.row(i));
            counts[c] += 1;
        }
        for c in 0..s {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    sums.row_mut(assignments[i]).scaled_add(-1.0, &h.row(i));
                    assignments[i] = c;
                    dist[i] = 0.0;
                    counts[c] = 1;
                    sums.row_mut(c).assign(&h.row(i));
                }
            }
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(h.row(i), centroids.row(assignments[i]))).sum();
    Ok(Clustering { assignments, centroids, inertia, iterations, converged, seed })
}

/// Lowest-inertia run over `repeats` seeds derived from `seed`.
pub fn kmeans_best(h: &Array2<f64>, s: usize, seed: u64, repeats: usize, max_iter: usize) -> Result<Clustering> {
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Clustering> = None;
    for _ in 0..repeats.max(1) {
        let c = kmeans(h, s, seeder.gen(), max_iter)?;
        if best.as_ref().map_or(true, |b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one repeat"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviatedSets {
    /// `S_k` per cluster, sorted.
    pub sets: Vec<Vec<usize>>,
    /// `D̄_k(i)` for every node, against the clusters other than its own.
    pub mean_distance: Vec<f64>,
    pub zero_norm_rows: usize,
}

/// Cosine distance `1 - cos`; a zero-norm side gives 1.
pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - a.dot(&b) / (na * nb)
}

/// Per cluster `C_k`, the `K_dev` members with the largest mean cosine
/// distance to every node outside `C_k` (ties to the smaller index).
pub fn deviated_nodes(clustering: &Clustering, h: &Array2<f64>, k_dev: usize) -> Result<DeviatedSets> {
    let n = h.nrows();
    if clustering.assignments.len() != n {
        return Err(Error::dim("deviated_nodes", format!("{} assignments for {n} rows", clustering.assignments.len())));
    }
    let zero_norm_rows = h.rows().into_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count();
    let a = &clustering.assignments;
    let mean_distance: Vec<f64> = (0..n)
        .map(|i| {
            let (mut sum, mut cnt) = (0.0, 0usize);
            for j in (0..n).filter(|&j| a[j] != a[i]) {
                sum += cosine_distance(h.row(i), h.row(j));
                cnt += 1;
            }
            if cnt == 0 { 0.0 } else { sum / cnt as f64 }
        })
        .collect();
    let sets = clustering
        .clusters()
        .into_iter()
        .map(|mut members| {
            members.sort_by(|&x, &y| mean_distance[y].total_cmp(&mean_distance[x]).then(x.cmp(&y)));
            members.truncate(k_dev);
            members.sort_unstable();
            members
        })
        .collect();
    Ok(DeviatedSets { sets, mean_distance, zero_norm_rows })
}

/// `𝒫(i) ← 𝒫(i) ∪ S_k` for every `i ∈ C_k`.
pub fn augment_positives(p: &PosMatrix, clustering: &Clustering, sets: &[Vec<usize>]) -> Result<PosMatrix> {
    if sets.len() != clustering.k() {
        return Err(Error::dim("augment_positives", format!("{} sets for {} clusters", sets.len(), clustering.k())));
    }
    augment_by_assignment(p, &clustering.assignments, sets)
}

/// [`augment_positives`] from bare cluster indices.
pub fn augment_by_assignment(p: &PosMatrix, assignments: &[usize], sets: &[Vec<usize>]) -> Result<PosMatrix> {
    if p.len() != assignments.len() || assignments.iter().any(|&c| c >= sets.len()) {
        return Err(Error::dim("augment_positives", "positive matrix, assignments and sets disagree"));
    }
    let rows = (0..p.len())
        .map(|i| {
            let mut r = p.row(i).to_vec();
            r.extend_from_slice(&sets[assignments[i]]);
            r
        })
        .collect();
    PosMatrix::from_rows(rows)
}
