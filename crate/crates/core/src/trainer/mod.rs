//! End-to-end training: static meta-path artifacts, the two-channel forward
//! pass, the warm-up / cluster-augmentation schedule, and Adam updates.

pub mod checkpoint;
pub mod config;

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{augment_by_assignment, deviated_nodes, kmeans_best};
use crate::diff::optim::{Adam, Params};
use crate::diff::{RowSets, Tape, Var};
use crate::encoders::{
    fusion_view_embed, glorot, han_decode, han_encode, init_han, reconstruct_adjacency, schema_aggregate,
    schema_view_embed, Act, Activation, Bound, HanShape, NeighborBlock, NodeInput, ViewAttentionVars,
};
use crate::error::{Error, Result};
use crate::graph::{FeatureView, HeteroGraph, SparseAdj};
use crate::masking::{apply_mask, mask_edges, remask, MaskPlan};
use crate::metapath::{
    build_positive_matrix, khop_combine, metapath_connection_counts, pathsim_matrix, sym_normalize, topk_filter,
    PosMatrix, SimilarityMatrix,
};
use crate::objectives::{contrastive_loss, metapath_recon_loss, pos_rowsets, scaled_cosine_error, weighted_terms};

pub use config::{EvalEmbedding, PosAug, TrainConfig};

/// SplitMix64 finalizer; mixes `(seed, epoch, stream)` into a generator seed.
pub fn derive_seed(seed: u64, epoch: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_FEATURE_MASK: u64 = 2;
const STREAM_EDGE_MASK: u64 = 3;
const STREAM_KMEANS: u64 = 4;

#[derive(Debug, Clone)]
pub struct NeighborInput {
    pub type_name: String,
    pub incidence: Arc<SparseAdj>,
    /// `None` for identity features.
    pub features: Option<Array2<f64>>,
    pub feature_dim: usize,
}

/// Static artifacts computed once per (graph, config).
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub n: usize,
    pub metapath_names: Vec<String>,
    /// Composed boolean meta-path adjacencies `A^φ`.
    pub adjs: Vec<SparseAdj>,
    pub adjs_with_loops: Vec<Arc<SparseAdj>>,
    /// Dense `A^φ`, the meta-path reconstruction targets.
    pub targets: Vec<Arc<Array2<f64>>>,
    pub path_counts: Vec<SparseAdj>,
    pub similarity: Vec<SimilarityMatrix>,
    /// Normalized top-K PathSim graphs `Ã^φ_sim`.
    pub sim_adjs: Vec<Arc<SparseAdj>>,
    pub connection_counts: SparseAdj,
    pub p_mpc: PosMatrix,
    /// Target features; `None` is identity.
    pub features: Option<Array2<f64>>,
    pub feature_dim: usize,
    pub neighbors: Vec<NeighborInput>,
}

pub fn precompute(graph: &HeteroGraph, cfg: &TrainConfig) -> Result<Precomputed> {
    cfg.validate()?;
    graph.validate()?;
    if graph.metapaths.is_empty() {
        return Err(Error::Config("the dataset declares no meta-paths".into()));
    }
    let n = graph.target_count();
    let mut adjs = Vec::new();
    let mut path_counts = Vec::new();
    for mp in &graph.metapaths {
        let (s, d) = graph.chain_types(&mp.relation_chain)?;
        if s != graph.target_type || d != graph.target_type {
            return Err(Error::Schema(format!("meta-path `{}` does not start and end at the target type", mp.name)));
        }
        adjs.push(graph.compose_metapath_adjacency(mp)?);
        path_counts.push(graph.count_metapath_paths(mp)?);
    }
    let similarity = path_counts.iter().map(pathsim_matrix).collect::<Result<Vec<_>>>()?;
    let sim_adjs = similarity
        .iter()
        .map(|s| Ok(Arc::new(sym_normalize(&topk_filter(s, cfg.k_sim)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let connection_counts = metapath_connection_counts(&adjs)?;
    let base = build_positive_matrix(&connection_counts, cfg.t_pos.unwrap_or(usize::MAX))?;
    let p_mpc = khop_combine(&base, cfg.k)?;
    let (features, feature_dim) = match graph.feature_view(&graph.target_type)? {
        FeatureView::Dense(m) => (Some(m.clone()), m.ncols()),
        FeatureView::Identity(n) => (None, n),
    };
    let neighbors = graph
        .heterogeneous_neighbors()?
        .into_iter()
        .map(|(ty, inc)| {
            let (f, dim) = match graph.feature_view(&ty)? {
                FeatureView::Dense(m) => (Some(m.clone()), m.ncols()),
                FeatureView::Identity(c) => (None, c),
            };
            Ok(NeighborInput { type_name: ty, incidence: Arc::new(inc), features: f, feature_dim: dim })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Precomputed {
        n,
        metapath_names: graph.metapaths.iter().map(|m| m.name.clone()).collect(),
        adjs_with_loops: adjs.iter().map(|a| Arc::new(a.with_self_loops())).collect(),
        targets: adjs.iter().map(|a| Arc::new(a.to_dense())).collect(),
        adjs,
        path_counts,
        similarity,
        sim_adjs,
        connection_counts,
        p_mpc,
        features,
        feature_dim,
        neighbors,
    })
}

fn gcn_names(cfg: &TrainConfig, view: &str) -> Vec<String> {
    (0..cfg.gcn_layers)
        .map(|l| if cfg.tie_gcn_weights { format!("gcn.l{l}.w") } else { format!("gcn.{view}.l{l}.w") })
        .collect()
}

/// Glorot-initialized parameters for every module; tokens start at zero and
/// PReLU slopes at 0.25.
pub fn init_params(pre: &Precomputed, cfg: &TrainConfig) -> Result<Params> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, STREAM_INIT));
    let (p, hd, f) = (pre.adjs.len(), cfg.hidden_dim, pre.feature_dim);
    let mut params = Params::new();
    init_han(&mut params, "enc", HanShape { metapaths: p, heads: cfg.heads, in_dim: f, out_dim: hd, semantic_dim: hd }, &mut rng)?;
    init_han(&mut params, "dec_feat", HanShape { metapaths: p, heads: 1, in_dim: hd, out_dim: f, semantic_dim: hd }, &mut rng)?;
    init_han(&mut params, "dec_mp", HanShape { metapaths: p, heads: 1, in_dim: hd, out_dim: hd, semantic_dim: hd }, &mut rng)?;
    params.insert("token.feat".into(), Array2::zeros((1, f)));
    params.insert("token.hidden".into(), Array2::zeros((1, hd)));
    for nb in &pre.neighbors {
        params.insert(format!("schema.{}.w", nb.type_name), glorot(&mut rng, nb.feature_dim, hd));
    }
    let mut gcn: Vec<String> = gcn_names(cfg, "schema");
    gcn.extend(gcn_names(cfg, "fusion"));
    gcn.sort();
    gcn.dedup();
    for name in gcn {
        params.insert(name, glorot(&mut rng, hd, hd));
    }
    params.insert("view.att.w".into(), glorot(&mut rng, hd, hd));
    params.insert("view.att.b".into(), Array2::zeros((1, hd)));
    params.insert("view.att.a".into(), glorot(&mut rng, hd, 1));
    if cfg.activation == Activation::Prelu {
        for m in ["enc", "schema", "gcn"] {
            params.insert(format!("act.{m}.slope"), Array2::from_elem((1, 1), 0.25));
        }
    }
    Ok(params)
}

fn act_for(cfg: &TrainConfig, b: &Bound, module: &str) -> Result<Act> {
    Ok(match cfg.activation {
        Activation::Elu => Act::Elu,
        Activation::Tanh => Act::Tanh,
        Activation::Linear => Act::Linear,
        Activation::Prelu => Act::Prelu(b.get(&format!("act.{module}.slope"))?),
    })
}

/// Records the dataset inputs for the target features.
fn target_input(tape: &mut Tape, pre: &Precomputed, materialize: bool) -> NodeInput {
    match &pre.features {
        Some(x) => NodeInput::Dense(tape.constant(x.clone())),
        None if materialize => NodeInput::Dense(tape.constant(Array2::eye(pre.n))),
        None => NodeInput::Identity,
    }
}

fn neighbor_blocks(tape: &mut Tape, pre: &Precomputed) -> Vec<NeighborBlock> {
    pre.neighbors
        .iter()
        .map(|nb| NeighborBlock {
            type_name: nb.type_name.clone(),
            incidence: nb.incidence.clone(),
            features: match &nb.features {
                Some(x) => NodeInput::Dense(tape.constant(x.clone())),
                None => NodeInput::Identity,
            },
        })
        .collect()
}

struct Views {
    z_schema: Var,
    beta: Var,
    z_fusion: Var,
}

fn views(tape: &mut Tape, pre: &Precomputed, cfg: &TrainConfig, b: &Bound, h_feat: Var, h_mp: Var, alpha: Var) -> Result<Views> {
    let blocks = neighbor_blocks(tape, pre);
    let schema_w: BTreeMap<String, Var> = pre
        .neighbors
        .iter()
        .map(|nb| Ok((nb.type_name.clone(), b.get(&format!("schema.{}.w", nb.type_name))?)))
        .collect::<Result<_>>()?;
    let h_agg = schema_aggregate(tape, h_feat, &blocks, &schema_w, act_for(cfg, b, "schema")?)?;
    let att = ViewAttentionVars { w: b.get("view.att.w")?, b: b.get("view.att.b")?, a: b.get("view.att.a")? };
    let gact = act_for(cfg, b, "gcn")?;
    let ws = gcn_names(cfg, "schema").iter().map(|n| b.get(n)).collect::<Result<Vec<_>>>()?;
    let sv = schema_view_embed(tape, h_agg, &pre.sim_adjs, &ws, &att, gact)?;
    let wf = gcn_names(cfg, "fusion").iter().map(|n| b.get(n)).collect::<Result<Vec<_>>>()?;
    let z_fusion = fusion_view_embed(tape, h_mp, &pre.sim_adjs, alpha, &wf, gact)?;
    Ok(Views { z_schema: sv.z, beta: sv.beta, z_fusion })
}

/// Per-epoch recorded losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    /// 1-based.
    pub epoch: usize,
    pub l_feat: f64,
    pub l_mp: f64,
    pub l_con: f64,
    pub l_final: f64,
}

pub fn history_csv(history: &[EpochLosses]) -> String {
    let mut out = String::from("epoch,l_feat,l_mp,l_con,l_final\n");
    for h in history {
        out.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", h.epoch, h.l_feat, h.l_mp, h.l_con, h.l_final));
    }
    out
}

struct Step {
    tape: Tape,
    bound: Bound,
    total: Var,
    losses: EpochLosses,
}

/// One training forward pass; `epoch` is 0-based and selects the mask seeds.
fn forward_train(pre: &Precomputed, cfg: &TrainConfig, params: &Params, pos: &RowSets, epoch: usize) -> Result<Step> {
    let w = cfg.effective_weights();
    let (use_feat, use_mp, use_con) = (w.lambda1 > 0.0, w.lambda2 > 0.0, w.contrastive() > 0.0);
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, params);
    let p = pre.adjs.len();
    let enc = b.han("enc", p, cfg.heads, act_for(cfg, &b, "enc")?)?;
    let e = epoch as u64;

    // Feature-masked branch.
    let plan = MaskPlan::sample(pre.n, cfg.rho, derive_seed(cfg.seed, e, STREAM_FEATURE_MASK))?;
    let x_in = if plan.is_empty() {
        target_input(&mut tape, pre, false)
    } else {
        let NodeInput::Dense(x) = target_input(&mut tape, pre, true) else { unreachable!() };
        NodeInput::Dense(apply_mask(&mut tape, x, &plan, b.get("token.feat")?)?)
    };
    let h_feat = han_encode(&mut tape, &pre.adjs_with_loops, x_in, &enc)?;
    let mut terms = Vec::new();
    let mut l_feat = 0.0;
    if use_feat {
        let h_rm = remask(&mut tape, h_feat.combined, &plan, b.get("token.hidden")?)?;
        let dec = b.han("dec_feat", p, 1, Act::Linear)?;
        let z = han_decode(&mut tape, &pre.adjs_with_loops, h_rm, &dec)?;
        let NodeInput::Dense(x) = target_input(&mut tape, pre, true) else { unreachable!() };
        let rows = (!plan.is_empty()).then_some(plan.indices.as_slice());
        let l = scaled_cosine_error(&mut tape, x, z.combined, rows, cfg.gamma1)?.loss;
        l_feat = tape.scalar(l);
        terms.push((l, w.lambda1));
    }

    // Edge-masked branch.
    let masked = mask_edges(&pre.adjs, cfg.p_e, derive_seed(cfg.seed, e, STREAM_EDGE_MASK))?;
    let masked: Vec<Arc<SparseAdj>> = masked.iter().map(|a| Arc::new(a.with_self_loops())).collect();
    let x_plain = target_input(&mut tape, pre, false);
    let h_mp = han_encode(&mut tape, &masked, x_plain, &enc)?;
    let mut l_mp = 0.0;
    if use_mp {
        let dec = b.han("dec_mp", p, 1, Act::Linear)?;
        let z = han_decode(&mut tape, &masked, h_mp.combined, &dec)?;
        let recon = if cfg.per_metapath_aprime {
            z.per_metapath.iter().map(|&zp| reconstruct_adjacency(&mut tape, zp)).collect::<Result<Vec<_>>>()?
        } else {
            vec![reconstruct_adjacency(&mut tape, z.combined)?; p]
        };
        let targets: Vec<Var> = pre.targets.iter().map(|t| tape.constant((**t).clone())).collect();
        let l = metapath_recon_loss(&mut tape, &targets, &recon, h_mp.alpha, cfg.gamma2)?.loss;
        l_mp = tape.scalar(l);
        terms.push((l, w.lambda2));
    }

    let mut l_con = 0.0;
    if use_con {
        let v = views(&mut tape, pre, cfg, &b, h_feat.combined, h_mp.combined, h_mp.alpha)?;
        let l = contrastive_loss(&mut tape, v.z_fusion, v.z_schema, pos, cfg.tau, cfg.contrastive_options())?;
        l_con = tape.scalar(l);
        terms.push((l, w.contrastive()));
    }
    let total = weighted_terms(&mut tape, &terms)?;
    let l_final = tape.scalar(total);
    Ok(Step { tape, bound: b, total, losses: EpochLosses { epoch: epoch + 1, l_feat, l_mp, l_con, l_final } })
}

/// Unmasked embeddings and attention weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    /// Encoder output `H = g_E(A^Φ, X)`.
    pub h: Array2<f64>,
    pub z_schema: Array2<f64>,
    pub z_fusion: Array2<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Embeddings {
    pub fn for_eval(&self, kind: EvalEmbedding) -> Array2<f64> {
        let views = (&self.z_schema + &self.z_fusion) * 0.5;
        match kind {
            EvalEmbedding::Concat => concatenate(Axis(1), &[self.h.view(), views.view()]).expect("row counts agree"),
            EvalEmbedding::Encoder => self.h.clone(),
            EvalEmbedding::Views => views,
        }
    }
}

/// Attention weights from an unmasked forward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionSnapshot {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Node-level attention, `[meta-path][head]`, one weight per stored edge.
    pub node: Vec<Vec<Vec<f64>>>,
    /// Row offsets of the node-level weights for each meta-path.
    pub node_indptr: Vec<Vec<usize>>,
}

fn col(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).iter().copied().collect()
}

fn forward_eval(pre: &Precomputed, cfg: &TrainConfig, params: &Params) -> Result<(Embeddings, AttentionSnapshot)> {
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, params);
    let enc = b.han("enc", pre.adjs.len(), cfg.heads, act_for(cfg, &b, "enc")?)?;
    let x = target_input(&mut tape, pre, false);
    let h = han_encode(&mut tape, &pre.adjs_with_loops, x, &enc)?;
    let v = views(&mut tape, pre, cfg, &b, h.combined, h.combined, h.alpha)?;
    let mut node = Vec::new();
    let mut node_indptr = Vec::new();
    for (heads, adj) in h.node_attention.iter().zip(&pre.adjs_with_loops) {
        node.push(heads.iter().map(|&a| tape.attention_weights(a).map(|(_, w)| w.to_vec()).unwrap_or_default()).collect());
        node_indptr.push((0..=adj.rows()).map(|r| (0..r).map(|i| adj.row_nnz(i)).sum()).collect());
    }
    let emb = Embeddings {
        h: tape.value(h.combined).clone(),
        z_schema: tape.value(v.z_schema).clone(),
        z_fusion: tape.value(v.z_fusion).clone(),
        alpha: col(&tape, h.alpha),
        beta: col(&tape, v.beta),
    };
    let snap = AttentionSnapshot { alpha: emb.alpha.clone(), beta: emb.beta.clone(), node, node_indptr };
    Ok((emb, snap))
}

/// Cluster augmentation in force since `epoch` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentation {
    pub epoch: usize,
    pub assignments: Vec<usize>,
    pub sets: Vec<Vec<usize>>,
}

/// Identifies the dataset a state was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub target_type: String,
    pub target_count: usize,
    pub feature_dim: usize,
    pub metapaths: Vec<String>,
}

impl DatasetFingerprint {
    pub fn of(graph: &HeteroGraph) -> Result<Self> {
        Ok(DatasetFingerprint {
            target_type: graph.target_type.clone(),
            target_count: graph.target_count(),
            feature_dim: graph.feature_view(&graph.target_type)?.dim(),
            metapaths: graph.metapaths.iter().map(|m| m.name.clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedState {
    pub config: TrainConfig,
    pub fingerprint: DatasetFingerprint,
    pub params: Params,
    pub adam: Adam,
    /// Epochs completed.
    pub epoch: usize,
    pub history: Vec<EpochLosses>,
    pub augmentation: Option<Augmentation>,
    /// Unmasked embeddings after the last completed epoch, when computed.
    pub embeddings: Option<Embeddings>,
}

pub struct Trainer {
    pub pre: Precomputed,
    pub state: TrainedState,
    num_classes: Option<usize>,
    positives: RowSets,
}

impl Trainer {
    pub fn new(graph: &HeteroGraph, cfg: TrainConfig) -> Result<Self> {
        let pre = precompute(graph, &cfg)?;
        let params = init_params(&pre, &cfg)?;
        let state = TrainedState {
            fingerprint: DatasetFingerprint::of(graph)?,
            adam: Adam::new(cfg.optimizer),
            config: cfg,
            params,
            epoch: 0,
            history: Vec::new(),
            augmentation: None,
            embeddings: None,
        };
        Self::with_state(graph, pre, state)
    }

    /// Resumes from a saved state; the dataset must match its fingerprint.
    pub fn resume(graph: &HeteroGraph, state: TrainedState) -> Result<Self> {
        let fp = DatasetFingerprint::of(graph)?;
        if fp != state.fingerprint {
            return Err(Error::Checkpoint(format!("dataset {fp:?} does not match checkpoint {:?}", state.fingerprint)));
        }
        let pre = precompute(graph, &state.config)?;
        let fresh = init_params(&pre, &state.config)?;
        for (name, p) in &fresh {
            match state.params.get(name) {
                Some(q) if q.dim() == p.dim() => {}
                _ => return Err(Error::Checkpoint(format!("parameter `{name}` missing or misshapen"))),
            }
        }
        Self::with_state(graph, pre, state)
    }

    fn with_state(graph: &HeteroGraph, pre: Precomputed, state: TrainedState) -> Result<Self> {
        let cfg = &state.config;
        let num_classes = graph.num_classes();
        if cfg.pos_aug.uses_cluster() && cfg.s.is_none() && num_classes.map_or(true, |c| c < 2) {
            return Err(Error::Config("cluster augmentation needs `s` or at least two label classes".into()));
        }
        let mut t = Trainer { pre, state, num_classes, positives: Arc::new(Vec::new()) };
        t.positives = pos_rowsets(&t.positive_matrix()?);
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.state.config
    }

    /// Positive sets currently used by the contrastive loss.
    pub fn positive_matrix(&self) -> Result<PosMatrix> {
        let cfg = &self.state.config;
        let base = if cfg.pos_aug.uses_mpc() { self.pre.p_mpc.clone() } else { PosMatrix::identity(self.pre.n) };
        match &self.state.augmentation {
            Some(a) if cfg.pos_aug.uses_cluster() => augment_by_assignment(&base, &a.assignments, &a.sets),
            _ => Ok(base),
        }
    }

    fn cluster_count(&self) -> usize {
        self.state.config.s.or(self.num_classes).unwrap_or(2)
    }

    fn augmentation_due(&self) -> bool {
        let cfg = &self.state.config;
        let e = self.state.epoch;
        if !cfg.pos_aug.uses_cluster() || cfg.effective_weights().contrastive() == 0.0 || e < cfg.warmup_epochs {
            return false;
        }
        match (&self.state.augmentation, cfg.refresh_interval) {
            (None, _) => true,
            (Some(a), Some(r)) => e - a.epoch >= r,
            (Some(_), None) => false,
        }
    }

    /// K-means on the unmasked encoder output and the deviated-node sets.
    pub fn refresh_augmentation(&mut self) -> Result<()> {
        let cfg = self.state.config.clone();
        let (emb, _) = forward_eval(&self.pre, &cfg, &self.state.params)?;
        let seed = derive_seed(cfg.seed, self.state.epoch as u64, STREAM_KMEANS);
        let clustering = kmeans_best(&emb.h, self.cluster_count(), seed, cfg.kmeans_repeats, cfg.kmeans_iters)?;
        let dev = deviated_nodes(&clustering, &emb.h, cfg.k_dev)?;
        self.state.augmentation = Some(Augmentation { epoch: self.state.epoch, assignments: clustering.assignments, sets: dev.sets });
        self.positives = pos_rowsets(&self.positive_matrix()?);
        Ok(())
    }

    /// One optimizer step over the full graph.
    pub fn train_epoch(&mut self) -> Result<EpochLosses> {
        let epoch = self.state.epoch;
        let wrap = |e: Error| match e {
            Error::Config(_) | Error::Schema(_) => e,
            other => Error::Training { epoch: epoch + 1, detail: other.to_string() },
        };
        if self.augmentation_due() {
            self.refresh_augmentation().map_err(wrap)?;
        }
        let step = forward_train(&self.pre, &self.state.config, &self.state.params, &self.positives, epoch).map_err(wrap)?;
        let grads = step.tape.backward(step.total).map_err(wrap)?;
        let mut named = Params::new();
        for (name, &v) in step.bound.iter() {
            if let Some(g) = grads.get(v) {
                named.insert(name.clone(), g.clone());
            }
        }
        self.state.adam.step(&mut self.state.params, &named).map_err(wrap)?;
        self.state.epoch += 1;
        self.state.history.push(step.losses);
        self.state.embeddings = None;
        Ok(step.losses)
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn run(&mut self) -> Result<()> {
        while self.state.epoch < self.state.config.epochs {
            self.train_epoch()?;
        }
        Ok(())
    }

    pub fn embeddings(&self) -> Result<Embeddings> {
        Ok(forward_eval(&self.pre, &self.state.config, &self.state.params)?.0)
    }

    pub fn attention(&self) -> Result<AttentionSnapshot> {
        Ok(forward_eval(&self.pre, &self.state.config, &self.state.params)?.1)
    }

    /// Gradients of one training step, by parameter name, without updating.
    pub fn gradients(&self) -> Result<Params> {
        let step = forward_train(&self.pre, &self.state.config, &self.state.params, &self.positives, self.state.epoch)?;
        let grads = step.tape.backward(step.total)?;
        Ok(step
            .bound
            .iter()
            .filter_map(|(name, &v)| grads.get(v).map(|g| (name.clone(), g.clone())))
            .collect())
    }

    pub fn into_state(mut self) -> Result<TrainedState> {
        if self.state.embeddings.is_none() {
            self.state.embeddings = Some(self.embeddings()?);
        }
        Ok(self.state)
    }
}

/// Builds a trainer and runs the full schedule.
pub fn fit(graph: &HeteroGraph, cfg: TrainConfig) -> Result<TrainedState> {
    let mut t = Trainer::new(graph, cfg)?;
    t.run()?;
    t.into_state()
}
