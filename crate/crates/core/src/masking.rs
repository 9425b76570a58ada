//! Feature masking with a learnable token, re-masking of encoder output, and
//! Bernoulli edge dropping.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::SparseAdj;

/// The node set whose feature rows are replaced by the mask token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub n: usize,
    /// Sorted, unique.
    pub indices: Vec<usize>,
    pub seed: u64,
}

/// `⌊ρN⌋`, guarded against `0.29 * 100 = 28.999…`.
pub fn masked_count(n: usize, rho: f64) -> usize {
    ((rho * n as f64) + 1e-9).floor() as usize
}

impl MaskPlan {
    pub fn sample(n: usize, rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("mask rate {rho} outside [0, 1]")));
        }
        let m = masked_count(n, rho).min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = sample(&mut rng, n, m).into_vec();
        indices.sort_unstable();
        Ok(MaskPlan { n, indices, seed })
    }

    pub fn empty(n: usize) -> Self {
        MaskPlan { n, indices: Vec::new(), seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.n {
            return Err(Error::dim("mask plan", format!("plan for {} rows applied to {rows}", self.n)));
        }
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("mask plan", format!("index {bad} out of range for {rows} rows")));
        }
        Ok(())
    }
}

/// Samples a plan and replaces its rows of `x` with `token` (1xF).
pub fn mask_features(x: &Array2<f64>, rho: f64, token: &Array2<f64>, seed: u64) -> Result<(Array2<f64>, MaskPlan)> {
    if token.dim() != (1, x.ncols()) {
        return Err(Error::dim("mask_features", format!("token {:?} for {} columns", token.dim(), x.ncols())));
    }
    let plan = MaskPlan::sample(x.nrows(), rho, seed)?;
    let mut out = x.clone();
    for &i in &plan.indices {
        out.row_mut(i).assign(&token.row(0));
    }
    Ok((out, plan))
}

/// Recorded masking: gradients reach the token through the replaced rows.
pub fn apply_mask(tape: &mut Tape, x: Var, plan: &MaskPlan, token: Var) -> Result<Var> {
    plan.check(tape.value(x).nrows())?;
    if plan.is_empty() {
        return Ok(x);
    }
    tape.row_replace(x, &plan.indices, token)
}

/// Replaces the same rows of the encoder output with a hidden-space token.
pub fn remask(tape: &mut Tape, h: Var, plan: &MaskPlan, hidden_token: Var) -> Result<Var> {
    apply_mask(tape, h, plan, hidden_token)
}

/// Drops each stored entry of every adjacency independently with probability
/// `p_e`. One generator runs through the matrices in order.
pub fn mask_edges(adjs: &[SparseAdj], p_e: f64, seed: u64) -> Result<Vec<SparseAdj>> {
    if !(0.0..1.0).contains(&p_e) {
        return Err(Error::Config(format!("edge drop probability {p_e} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(adjs
        .iter()
        .map(|a| {
            if p_e == 0.0 {
                return a.clone();
            }
            a.filter_map(|_, _, v| (rng.gen::<f64>() >= p_e).then_some(v))
        })
        .collect())
}
