//! Linear-probe node classification and K-means clustering evaluation over
//! frozen embeddings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans_best;
use crate::error::{Error, Result};
use crate::graph::Split;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

fn confusion(y: &[usize], p: &[usize], k: usize) -> Vec<(f64, f64, f64)> {
    let mut tp_fp_fn = vec![(0.0, 0.0, 0.0); k];
    for (&t, &q) in y.iter().zip(p) {
        if t == q {
            tp_fp_fn[t].0 += 1.0;
        } else {
            tp_fp_fn[q].1 += 1.0;
            tp_fp_fn[t].2 += 1.0;
        }
    }
    tp_fp_fn
}

/// Unweighted mean of per-class F1 over the `k` classes (F1 = 0 for a class
/// with no true or predicted members).
pub fn macro_f1(y: &[usize], pred: &[usize], k: usize) -> f64 {
    let c = confusion(y, pred, k);
    let f1: f64 = c
        .iter()
        .map(|&(tp, fp, fne)| if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fne) })
        .sum();
    f1 / k as f64
}

/// Instance-level F1, equal to accuracy for single-label prediction.
pub fn micro_f1(y: &[usize], pred: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Binary ROC AUC by the rank-sum statistic with tied scores averaged.
/// `None` when one class is absent.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..scores.len()).filter(|&t| positive[t]).map(|t| ranks[t]).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC averaged over the classes present in `y`.
pub fn macro_auc_ovr(y: &[usize], scores: &Array2<f64>) -> f64 {
    let aucs: Vec<f64> = (0..scores.ncols())
        .filter_map(|c| {
            let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
            binary_auc(&pos, &scores.column(c).to_vec())
        })
        .collect();
    if aucs.is_empty() {
        return 0.5;
    }
    aucs.iter().sum::<f64>() / aucs.len() as f64
}

fn contingency(a: &[usize], b: &[usize]) -> (BTreeMap<(usize, usize), f64>, BTreeMap<usize, f64>, BTreeMap<usize, f64>) {
    let mut joint = BTreeMap::new();
    let mut ra = BTreeMap::new();
    let mut rb = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        *ra.entry(x).or_insert(0.0) += 1.0;
        *rb.entry(y).or_insert(0.0) += 1.0;
    }
    (joint, ra, rb)
}

fn entropy(counts: &BTreeMap<usize, f64>, n: f64) -> f64 {
    counts.values().map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// `NMI = I(A;B) / ((H(A) + H(B)) / 2)`; two single-cluster labelings give 1.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let (joint, ra, rb) = contingency(a, b);
    let (ha, hb) = (entropy(&ra, n), entropy(&rb, n));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &c)| (c / n) * (c * n / (ra[&x] * rb[&y])).ln()).sum();
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index via pair counting on the contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (joint, ra, rb) = contingency(a, b);
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sa: f64 = ra.values().map(|&c| comb2(c)).sum();
    let sb: f64 = rb.values().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return if index == expected { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub iters: usize,
    pub lr: f64,
    pub l2: f64,
    pub repeats: usize,
    /// Standardize columns with training-split statistics.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { iters: 300, lr: 0.5, l2: 1e-3, repeats: 5, standardize: true }
    }
}

/// Multinomial logistic regression fit by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct LogReg {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut r in z.rows_mut() {
        let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        r.mapv_inplace(|v| (v - m).exp());
        let s = r.sum();
        r /= s;
    }
}

impl LogReg {
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, cfg: &ProbeConfig, seed: u64) -> Self {
        let (n, d) = x.dim();
        let (mean, scale) = if cfg.standardize {
            let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
            let sd = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
            (mean, sd)
        } else {
            (Array1::zeros(d), Array1::ones(d))
        };
        let xs = (x - &mean) / &scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Array2::from_shape_fn((d, k), |_| rng.gen_range(-0.01..0.01));
        let mut b = Array1::zeros(k);
        let mut onehot = Array2::zeros((n, k));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }
        for _ in 0..cfg.iters {
            let mut p = xs.dot(&w) + &b;
            softmax_rows(&mut p);
            let g = (p - &onehot) / n as f64;
            let gw = xs.t().dot(&g) + &(&w * cfg.l2);
            w.scaled_add(-cfg.lr, &gw);
            b.scaled_add(-cfg.lr, &g.sum_axis(Axis(0)));
        }
        LogReg { w, b, mean, scale }
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let xs = (x - &self.mean) / &self.scale;
        let mut p = xs.dot(&self.w) + &self.b;
        softmax_rows(&mut p);
        p
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.predict_proba(x))
    }
}

fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub macro_f1: MeanStd,
    pub micro_f1: MeanStd,
    pub auc: MeanStd,
}

fn check_labels(n: usize, labels: &[usize]) -> Result<usize> {
    if labels.len() != n {
        return Err(Error::dim("evaluation", format!("{} labels for {n} embeddings", labels.len())));
    }
    Ok(labels.iter().copied().max().map_or(0, |m| m + 1))
}

/// Trains on `split.train`, scores on `split.test`, over `repeats`
/// initializations.
pub fn linear_probe(emb: &Array2<f64>, labels: &[usize], split: &Split, cfg: &ProbeConfig, seed: u64) -> Result<ProbeMetrics> {
    let k = check_labels(emb.nrows(), labels)?;
    let n = emb.nrows();
    if split.train.is_empty() || split.test.is_empty() || split.train.iter().chain(&split.test).any(|&i| i >= n) {
        return Err(Error::Config("split is empty or indexes past the embeddings".into()));
    }
    let xtr = emb.select(Axis(0), &split.train);
    let ytr: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let xte = emb.select(Axis(0), &split.test);
    let yte: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let (mut ma, mut mi, mut au) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.repeats.max(1) {
        let model = LogReg::fit(&xtr, &ytr, k, cfg, seeder.gen());
        let proba = model.predict_proba(&xte);
        let pred = argmax_rows(&proba);
        ma.push(macro_f1(&yte, &pred, k));
        mi.push(micro_f1(&yte, &pred));
        au.push(macro_auc_ovr(&yte, &proba));
    }
    Ok(ProbeMetrics { macro_f1: MeanStd::of(&ma), micro_f1: MeanStd::of(&mi), auc: MeanStd::of(&au) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub nmi: f64,
    pub ari: f64,
    pub inertia: f64,
}

/// K-means with `s` clusters, best of `repeats` by inertia, scored against
/// the labels.
pub fn clustering_eval(emb: &Array2<f64>, labels: &[usize], s: usize, repeats: usize, seed: u64) -> Result<ClusterMetrics> {
    check_labels(emb.nrows(), labels)?;
    let c = kmeans_best(emb, s, seed, repeats, 300)?;
    Ok(ClusterMetrics { nmi: nmi(labels, &c.assignments), ari: ari(labels, &c.assignments), inertia: c.inertia })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub probe: ProbeConfig,
    pub cluster_repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, probe: ProbeConfig::default(), cluster_repeats: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub splits: BTreeMap<String, ProbeMetrics>,
    pub clustering: ClusterMetrics,
}

pub fn evaluate(emb: &Array2<f64>, labels: &[usize], splits: &BTreeMap<String, Split>, cfg: &EvalConfig) -> Result<EvalReport> {
    let k = check_labels(emb.nrows(), labels)?;
    let splits = splits
        .iter()
        .map(|(name, s)| Ok((name.clone(), linear_probe(emb, labels, s, &cfg.probe, cfg.seed)?)))
        .collect::<Result<_>>()?;
    let clustering = clustering_eval(emb, labels, k.max(1), cfg.cluster_repeats, cfg.seed)?;
    Ok(EvalReport { config: cfg.clone(), splits, clustering })
}

pub const CSV_HEADER: &str = "split,macro_f1_mean,macro_f1_std,micro_f1_mean,micro_f1_std,auc_mean,auc_std,nmi,ari";

pub fn report_csv(r: &EvalReport) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (name, m) in &r.splits {
        out.push_str(&format!(
            "{name},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            m.macro_f1.mean, m.macro_f1.std, m.micro_f1.mean, m.micro_f1.std, m.auc.mean, m.auc.std, r.clustering.nmi, r.clustering.ari
        ));
    }
    out
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn export_report(r: &EvalReport, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(r)?).map_err(|e| Error::io(&json, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, report_csv(r)).map_err(|e| Error::io(&csv, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_one_class_on_balanced_pair() {
        let y = [0, 0, 1, 1];
        let p = [0, 0, 0, 0];
        assert_eq!(micro_f1(&y, &p), 0.5);
        assert!((macro_f1(&y, &p, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_probe_is_perfect() {
        let emb = Array2::from_shape_fn((40, 2), |(i, j)| if (i < 20) == (j == 0) { 1.0 } else { 0.0 } + 0.01 * i as f64);
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let split = Split { train: (0..40).step_by(2).collect(), val: vec![], test: (1..40).step_by(2).collect() };
        let m = linear_probe(&emb, &labels, &split, &ProbeConfig::default(), 0).unwrap();
        assert_eq!(m.macro_f1.mean, 1.0);
        assert_eq!(m.auc.mean, 1.0);
    }

    #[test]
    fn auc_by_hand() {
        assert_eq!(binary_auc(&[true, false], &[0.9, 0.1]), Some(1.0));
        assert_eq!(binary_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
        assert_eq!(binary_auc(&[true, true], &[0.5, 0.2]), None);
        // Positives at ranks 2 and 3 of 4: U = 5 - 3 = 2 of 4 pairs.
        let a = binary_auc(&[false, true, true, false], &[0.1, 0.4, 0.35, 0.8]).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn cluster_metric_cases() {
        let y = [0, 0, 1, 1, 2, 2];
        assert_eq!(nmi(&y, &[2, 2, 0, 0, 1, 1]), 1.0);
        assert_eq!(ari(&y, &[2, 2, 0, 0, 1, 1]), 1.0);
        assert_eq!(nmi(&y, &[0; 6]), 0.0);
        assert_eq!(nmi(&[0; 4], &[0; 4]), 1.0);
    }

    #[test]
    fn export_is_stable() {
        let m = MeanStd { mean: 0.5, std: 0.0 };
        let r = EvalReport {
            config: EvalConfig::default(),
            splits: [("40".to_string(), ProbeMetrics { macro_f1: m, micro_f1: m, auc: m })].into(),
            clustering: ClusterMetrics { nmi: 0.25, ari: 0.125, inertia: 3.0 },
        };
        let dir = tempfile::tempdir().unwrap();
        export_report(&r, dir.path(), "a").unwrap();
        export_report(&r, dir.path(), "b").unwrap();
        let ja = fs::read(dir.path().join("a.json")).unwrap();
        assert_eq!(ja, fs::read(dir.path().join("b.json")).unwrap());
        let back: EvalReport = serde_json::from_slice(&ja).unwrap();
        assert_eq!(back, r);
        let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    }
}
