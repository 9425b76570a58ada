use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diff::optim::AdamConfig;
use crate::encoders::Activation;
use crate::error::{Error, Result};
use crate::objectives::{ContrastiveOptions, LossWeights};

/// Which positive-set augmentations feed the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosAug {
    /// Self-only positives.
    None,
    /// Meta-path connection counts with k-hop closure.
    Mpc,
    /// Cluster-deviated nodes only.
    Cluster,
    Both,
}

impl PosAug {
    pub fn uses_mpc(self) -> bool {
        matches!(self, PosAug::Mpc | PosAug::Both)
    }

    pub fn uses_cluster(self) -> bool {
        matches!(self, PosAug::Cluster | PosAug::Both)
    }
}

/// Which embedding the evaluation harness consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalEmbedding {
    /// `concat(H, (Z_schema + Z_fusion) / 2)`.
    Concat,
    Encoder,
    Views,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub rho: f64,
    pub p_e: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `None` keeps every connected node.
    pub t_pos: Option<usize>,
    pub k: usize,
    pub k_sim: usize,
    pub k_dev: usize,
    /// Cluster count; `None` uses the number of label classes.
    pub s: Option<usize>,
    pub hidden_dim: usize,
    pub heads: usize,
    pub activation: Activation,
    pub gcn_layers: usize,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// `None` computes the cluster augmentation once, after warm-up.
    pub refresh_interval: Option<usize>,
    pub kmeans_iters: usize,
    pub kmeans_repeats: usize,
    pub generative_only: bool,
    pub contrastive_only: bool,
    pub pos_aug: PosAug,
    pub tie_gcn_weights: bool,
    pub per_metapath_aprime: bool,
    pub symmetrize_infonce: bool,
    pub infonce_mean_of_logs: bool,
    pub eval_embedding: EvalEmbedding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            rho: 0.5,
            p_e: 0.5,
            gamma1: 2.0,
            gamma2: 2.0,
            tau: 0.5,
            lambda1: 1.0 / 3.0,
            lambda2: 1.0 / 3.0,
            t_pos: Some(7),
            k: 1,
            k_sim: 10,
            k_dev: 3,
            s: None,
            hidden_dim: 64,
            heads: 4,
            activation: Activation::Elu,
            gcn_layers: 1,
            optimizer: AdamConfig::default(),
            epochs: 400,
            warmup_epochs: 20,
            refresh_interval: None,
            kmeans_iters: 100,
            kmeans_repeats: 5,
            generative_only: false,
            contrastive_only: false,
            pos_aug: PosAug::Both,
            tie_gcn_weights: true,
            per_metapath_aprime: true,
            symmetrize_infonce: true,
            infonce_mean_of_logs: false,
            eval_embedding: EvalEmbedding::Concat,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies a `key=value` override. The value is read as JSON when it
    /// parses (`0.3`, `true`, `null`, `"x"`), else as a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { lambda1: self.lambda1, lambda2: self.lambda2, gamma1: self.gamma1, gamma2: self.gamma2, tau: self.tau }
    }

    /// Weights actually applied, after ablations: generative-only rescales the
    /// two reconstruction weights to sum to 1, contrastive-only zeroes them.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.loss_weights();
        if self.generative_only {
            let total = w.lambda1 + w.lambda2;
            w.lambda1 /= total;
            w.lambda2 = 1.0 - w.lambda1;
        } else if self.contrastive_only {
            w.lambda1 = 0.0;
            w.lambda2 = 0.0;
        }
        w
    }

    pub fn contrastive_options(&self) -> ContrastiveOptions {
        ContrastiveOptions { symmetrize: self.symmetrize_infonce, mean_of_logs: self.infonce_mean_of_logs }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.loss_weights().validate()?;
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho = {} outside [0, 1]", self.rho));
        }
        if !(0.0..1.0).contains(&self.p_e) {
            return bad(format!("p_e = {} outside [0, 1)", self.p_e));
        }
        if self.generative_only && self.contrastive_only {
            return bad("generative_only and contrastive_only are mutually exclusive".into());
        }
        if self.generative_only && self.lambda1 + self.lambda2 <= 0.0 {
            return bad("generative_only needs lambda1 + lambda2 > 0".into());
        }
        if self.t_pos == Some(0) || self.k == 0 || self.k_sim == 0 {
            return bad("t_pos, k and k_sim must be at least 1".into());
        }
        if self.s.is_some_and(|s| s < 2) {
            return bad("cluster count s must be at least 2".into());
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!("hidden_dim {} must be a positive multiple of heads {}", self.hidden_dim, self.heads));
        }
        if self.activation == Activation::Linear {
            return bad("the encoder activation must be nonlinear (elu, tanh or prelu)".into());
        }
        if !(1..=2).contains(&self.gcn_layers) {
            return bad(format!("gcn_layers = {} must be 1 or 2", self.gcn_layers));
        }
        if self.refresh_interval == Some(0) {
            return bad("refresh_interval must be at least 1".into());
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) || o.weight_decay < 0.0 {
            return bad("invalid optimizer settings".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(TrainConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = TrainConfig::from_json(r#"{"lamda1": 0.2}"#).unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn overrides() {
        let mut c = TrainConfig::default();
        c.apply_override("pos_aug=none").unwrap();
        assert_eq!(c.pos_aug, PosAug::None);
        c.apply_override("lambda1=0.5").unwrap();
        assert_eq!(c.lambda1, 0.5);
        c.apply_override("t_pos=null").unwrap();
        assert_eq!(c.t_pos, None);
        c.apply_override("optimizer.lr=0.01").unwrap();
        assert_eq!(c.optimizer.lr, 0.01);
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_override("epochs").is_err());
        assert!(c.apply_override("epochs=many").is_err());
    }

    #[test]
    fn invalid_combinations() {
        let mut c = TrainConfig { lambda1: 0.7, lambda2: 0.6, ..Default::default() };
        assert!(c.validate().unwrap_err().is_config());
        c = TrainConfig { generative_only: true, contrastive_only: true, ..Default::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { heads: 3, ..Default::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { p_e: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn ablation_weights() {
        let g = TrainConfig { generative_only: true, ..Default::default() }.effective_weights();
        assert!((g.lambda1 - 0.5).abs() < 1e-15 && (g.lambda2 - 0.5).abs() < 1e-15);
        assert_eq!(g.contrastive(), 0.0);
        let c = TrainConfig { contrastive_only: true, ..Default::default() }.effective_weights();
        assert_eq!((c.lambda1, c.lambda2, c.contrastive()), (0.0, 0.0, 1.0));
    }
}
