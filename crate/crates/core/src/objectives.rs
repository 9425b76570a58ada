//! Scaled cosine reconstruction errors, multi-positive cross-view InfoNCE,
//! their weighted combination, and the analytic gradient-balance probe.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{RowSets, Tape, Var};
use crate::encoders::weighted_sum;
use crate::error::{Error, Result};
use crate::metapath::PosMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: 1.0 / 3.0, lambda2: 1.0 / 3.0, gamma1: 2.0, gamma2: 2.0, tau: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let LossWeights { lambda1, lambda2, gamma1, gamma2, tau } = *self;
        if !(0.0..=1.0).contains(&lambda1) || !(0.0..=1.0).contains(&lambda2) {
            return Err(Error::Config(format!("loss weights ({lambda1}, {lambda2}) must lie in [0, 1]")));
        }
        if lambda1 + lambda2 > 1.0 + 1e-12 {
            return Err(Error::Config(format!("lambda1 + lambda2 = {} exceeds 1", lambda1 + lambda2)));
        }
        if !(gamma1 >= 1.0) || !(gamma2 >= 1.0) {
            return Err(Error::Config(format!("scaling exponents ({gamma1}, {gamma2}) must be >= 1")));
        }
        check_tau(tau)
    }

    /// `1 - λ1 - λ2`, clamped at zero against rounding.
    pub fn contrastive(&self) -> f64 {
        (1.0 - self.lambda1 - self.lambda2).max(0.0)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SceOutput {
    pub loss: Var,
    /// Rows where the target or the prediction had zero norm (scored as `cos = 0`).
    pub zero_norm_rows: usize,
}

/// `mean_{v ∈ rows} (1 - cos(x_v, z_v))^γ`; every row when `rows` is `None`.
pub fn scaled_cosine_error(
    tape: &mut Tape,
    targets: Var,
    preds: Var,
    rows: Option<&[usize]>,
    gamma: f64,
) -> Result<SceOutput> {
    if !(gamma >= 1.0) {
        return Err(Error::Config(format!("scaling exponent {gamma} must be >= 1")));
    }
    if tape.value(targets).dim() != tape.value(preds).dim() {
        return Err(Error::dim(
            "scaled_cosine_error",
            format!("{:?} vs {:?}", tape.value(targets).dim(), tape.value(preds).dim()),
        ));
    }
    let (x, z) = match rows {
        Some(r) if r.is_empty() => return Err(Error::Contract("scaled cosine error over an empty row set".into())),
        Some(r) => (tape.row_select(targets, r)?, tape.row_select(preds, r)?),
        None => (targets, preds),
    };
    let zero = |m: &Array2<f64>, i: usize| m.row(i).iter().all(|&v| v == 0.0);
    let (xv, zv) = (tape.value(x), tape.value(z));
    let zero_norm_rows = (0..xv.nrows()).filter(|&i| zero(xv, i) || zero(zv, i)).count();
    let xn = tape.row_l2_normalize(x)?;
    let zn = tape.row_l2_normalize(z)?;
    let cos = tape.row_dot(xn, zn)?;
    let err = tape.affine(cos, -1.0, 1.0)?;
    let err = tape.clamp_min(err, 0.0)?;
    let scaled = if gamma == 1.0 { err } else { tape.pow(err, gamma)? };
    Ok(SceOutput { loss: tape.mean(scaled)?, zero_norm_rows })
}

#[derive(Debug, Clone)]
pub struct MetapathRecon {
    pub loss: Var,
    pub per_metapath: Vec<Var>,
    pub zero_norm_rows: usize,
}

/// `ℒ^φ = mean_v (1 - cos(A^φ_v, A'^φ_v))^γ2`, `ℒ_mp = Σ α^φ ℒ^φ`.
pub fn metapath_recon_loss(
    tape: &mut Tape,
    targets: &[Var],
    recon: &[Var],
    alpha: Var,
    gamma2: f64,
) -> Result<MetapathRecon> {
    if targets.len() != recon.len() || targets.is_empty() {
        return Err(Error::dim("metapath_recon_loss", format!("{} targets, {} reconstructions", targets.len(), recon.len())));
    }
    let a = tape.value(alpha);
    if a.len() != targets.len() {
        return Err(Error::dim("metapath_recon_loss", format!("{} weights for {} meta-paths", a.len(), targets.len())));
    }
    if (a.sum() - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("meta-path weights sum to {}", a.sum())));
    }
    let mut per = Vec::with_capacity(targets.len());
    let mut zero_norm_rows = 0;
    for (&t, &r) in targets.iter().zip(recon) {
        let out = scaled_cosine_error(tape, t, r, None, gamma2)?;
        zero_norm_rows += out.zero_norm_rows;
        per.push(out.loss);
    }
    let loss = weighted_sum(tape, alpha, &per)?;
    Ok(MetapathRecon { loss, per_metapath: per, zero_norm_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveOptions {
    /// Average with the loss that anchors in the second view.
    pub symmetrize: bool,
    /// `mean_k log(e_k / Σ)` over positives instead of `log(Σ_k e_k / Σ)`.
    pub mean_of_logs: bool,
}

impl Default for ContrastiveOptions {
    fn default() -> Self {
        ContrastiveOptions { symmetrize: true, mean_of_logs: false }
    }
}

pub fn pos_rowsets(p: &PosMatrix) -> RowSets {
    Arc::new(p.rows().to_vec())
}

fn directed_infonce(tape: &mut Tape, anchors: Var, others: Var, pos: &RowSets, tau: f64, opts: ContrastiveOptions) -> Result<Var> {
    let ot = tape.transpose(others)?;
    let sim = tape.matmul(anchors, ot)?;
    let sim = tape.scale(sim, 1.0 / tau)?;
    let den = tape.row_logsumexp(sim, None)?;
    let num = if opts.mean_of_logs { tape.masked_row_mean(sim, pos)? } else { tape.row_logsumexp(sim, Some(pos))? };
    let per = tape.sub(den, num)?;
    tape.mean(per)
}

/// Multi-positive InfoNCE between the fusion and schema views. Rows are
/// L2-normalized; anchor `i` of one view is contrasted against every row of
/// the other view, with `𝒫_i` in the numerator.
pub fn contrastive_loss(
    tape: &mut Tape,
    z_fusion: Var,
    z_schema: Var,
    pos: &RowSets,
    tau: f64,
    opts: ContrastiveOptions,
) -> Result<Var> {
    check_tau(tau)?;
    let n = tape.value(z_fusion).nrows();
    if tape.value(z_schema).dim() != tape.value(z_fusion).dim() {
        return Err(Error::dim("contrastive_loss", "views have different shapes"));
    }
    if pos.len() != n {
        return Err(Error::dim("contrastive_loss", format!("{} positive rows for {n} anchors", pos.len())));
    }
    let f = tape.row_l2_normalize(z_fusion)?;
    let s = tape.row_l2_normalize(z_schema)?;
    let fs = directed_infonce(tape, f, s, pos, tau, opts)?;
    if !opts.symmetrize {
        return Ok(fs);
    }
    let sf = directed_infonce(tape, s, f, pos, tau, opts)?;
    let both = tape.add(fs, sf)?;
    tape.scale(both, 0.5)
}

/// `Σ_k w_k ℒ_k` over the active terms.
pub fn weighted_terms(tape: &mut Tape, terms: &[(Var, f64)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(v, w) in terms {
        let t = tape.scale(v, w)?;
        acc = Some(match acc {
            None => t,
            Some(a) => tape.add(a, t)?,
        });
    }
    acc.ok_or_else(|| Error::Config("no active loss terms".into()))
}

/// `λ1 ℒ_feat + λ2 ℒ_mp + (1 - λ1 - λ2) ℒ_con`.
pub fn combined_loss(tape: &mut Tape, l_feat: Var, l_mp: Var, l_con: Var, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    weighted_terms(tape, &[(l_feat, w.lambda1), (l_mp, w.lambda2), (l_con, w.contrastive())])
}

pub fn combined_value(l_feat: f64, l_mp: f64, l_con: f64, w: &LossWeights) -> f64 {
    w.lambda1 * l_feat + w.lambda2 * l_mp + w.contrastive() * l_con
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleGradient {
    pub index: usize,
    pub positive: bool,
    pub prob: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: usize,
    pub d: usize,
    pub anchor: usize,
    pub tau: f64,
    pub positives: Vec<usize>,
    pub loss: f64,
    /// Sum of `∂ℒ_i/∂f(x_k)` over positives.
    pub pos_grad_sum: Vec<f64>,
    /// Sum of `∂ℒ_i/∂f(x_t)` over negatives.
    pub neg_grad_sum: Vec<f64>,
    pub residual_norm: f64,
    /// `Σ_j p_ij` over every non-anchor sample.
    pub prob_sum: f64,
    pub samples: Vec<SampleGradient>,
}

/// Analytic per-sample gradients of
/// `ℒ_i = -log(Σ_{k∈𝒫} e^{f_i·f_k/τ} / Σ_{j≠i} e^{f_i·f_j/τ})` with respect to
/// each sample embedding `f_j`, as rows indexed like `embeddings`; the anchor
/// row is zero. Also returns the sample softmax `p` and the loss.
pub fn infonce_sample_gradients(
    embeddings: &Array2<f64>,
    anchor: usize,
    positives: &[usize],
    tau: f64,
) -> Result<(Array2<f64>, Array1<f64>, f64)> {
    check_tau(tau)?;
    let n = embeddings.nrows();
    if anchor >= n {
        return Err(Error::Config(format!("anchor {anchor} out of range for {n} samples")));
    }
    if positives.is_empty() {
        return Err(Error::Config("at least one positive is required".into()));
    }
    let mut is_pos = vec![false; n];
    for &k in positives {
        if k >= n || k == anchor || std::mem::replace(&mut is_pos[k], true) {
            return Err(Error::Config(format!("positive {k} is out of range, the anchor, or repeated")));
        }
    }
    let fi = embeddings.row(anchor);
    let logits: Array1<f64> = Array1::from_shape_fn(n, |j| if j == anchor { f64::NEG_INFINITY } else { fi.dot(&embeddings.row(j)) / tau });
    let p = softmax(logits.view());
    let q = softmax(Array1::from_shape_fn(n, |j| if is_pos[j] { logits[j] } else { f64::NEG_INFINITY }).view());
    let pos_mass: f64 = positives.iter().map(|&k| p[k]).sum();
    let loss = -pos_mass.ln();
    let mut grads = Array2::zeros(embeddings.raw_dim());
    for j in (0..n).filter(|&j| j != anchor) {
        // Positive: -(1/τ)(q_k - p_k) f_i; negative: (1/τ) p_t f_i.
        let coef = if is_pos[j] { -(q[j] - p[j]) / tau } else { p[j] / tau };
        grads.row_mut(j).assign(&(&fi * coef));
    }
    Ok((grads, p, loss))
}

fn softmax(x: ArrayView1<f64>) -> Array1<f64> {
    let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = x.mapv(|v| (v - mx).exp());
    let s = e.sum();
    e / s
}

/// Splits the analytic sample gradients into positive and negative sums and
/// reports the norm of their total, which the balance identity puts at zero.
pub fn gradient_balance_probe(embeddings: &Array2<f64>, anchor: usize, positives: &[usize], tau: f64) -> Result<ProbeReport> {
    let (grads, p, loss) = infonce_sample_gradients(embeddings, anchor, positives, tau)?;
    let (n, d) = embeddings.dim();
    let mut pos_sum = Array1::zeros(d);
    let mut neg_sum = Array1::zeros(d);
    let mut samples = Vec::with_capacity(n.saturating_sub(1));
    let mut sorted = positives.to_vec();
    sorted.sort_unstable();
    for j in (0..n).filter(|&j| j != anchor) {
        let g = grads.row(j);
        let positive = sorted.binary_search(&j).is_ok();
        if positive {
            pos_sum += &g;
        } else {
            neg_sum += &g;
        }
        samples.push(SampleGradient { index: j, positive, prob: p[j], grad_norm: g.dot(&g).sqrt() });
    }
    let total = &pos_sum + &neg_sum;
    Ok(ProbeReport {
        n,
        d,
        anchor,
        tau,
        positives: sorted,
        loss,
        pos_grad_sum: pos_sum.to_vec(),
        neg_grad_sum: neg_sum.to_vec(),
        residual_norm: total.dot(&total).sqrt(),
        prob_sum: p.sum(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSweepConfig {
    pub seed: u64,
    pub trials: usize,
    pub max_n: usize,
    pub max_d: usize,
    pub taus: Vec<f64>,
    pub max_positives: usize,
    pub tolerance: f64,
}

impl Default for ProbeSweepConfig {
    fn default() -> Self {
        ProbeSweepConfig { seed: 0, trials: 100, max_n: 64, max_d: 32, taus: vec![0.2, 0.5, 1.0], max_positives: 16, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeTrial {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    pub positives: usize,
    pub residual_norm: f64,
    pub prob_sum_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSweepReport {
    pub config: ProbeSweepConfig,
    pub trials: Vec<ProbeTrial>,
    pub max_residual: f64,
    pub max_prob_sum_error: f64,
    pub passed: bool,
}

/// Runs the probe over uniform random embeddings: trial `t`
/// uses `τ = taus[t % len]` and a positive-set size cycling through
/// `1..=max_positives` (capped at `n - 1`).
pub fn probe_sweep(cfg: &ProbeSweepConfig) -> Result<ProbeSweepReport> {
    if cfg.taus.is_empty() || cfg.max_n < 2 || cfg.max_d < 1 || cfg.max_positives < 1 {
        return Err(Error::Config("probe sweep needs taus, max_n >= 2, max_d >= 1, max_positives >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let tau = cfg.taus[t % cfg.taus.len()];
        let n = rng.gen_range(2..=cfg.max_n);
        let d = rng.gen_range(1..=cfg.max_d);
        let m = (t % cfg.max_positives + 1).min(n - 1);
        let emb = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let anchor = rng.gen_range(0..n);
        let positives: Vec<usize> = sample(&mut rng, n - 1, m).into_iter().map(|j| if j >= anchor { j + 1 } else { j }).collect();
        let rep = gradient_balance_probe(&emb, anchor, &positives, tau)?;
        trials.push(ProbeTrial {
            n,
            d,
            tau,
            positives: m,
            residual_norm: rep.residual_norm,
            prob_sum_error: (rep.prob_sum - 1.0).abs(),
        });
    }
    let max_residual = trials.iter().map(|t| t.residual_norm).fold(0.0, f64::max);
    let max_prob_sum_error = trials.iter().map(|t| t.prob_sum_error).fold(0.0, f64::max);
    Ok(ProbeSweepReport {
        config: cfg.clone(),
        passed: max_residual <= cfg.tolerance,
        trials,
        max_residual,
        max_prob_sum_error,
    })
}
