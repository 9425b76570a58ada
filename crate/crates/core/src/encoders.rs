//! HAN encoder/decoder, heterogeneous-neighbor aggregation, GCN views, and
//! adjacency reconstruction, all expressed as recorded [`Tape`] computations.
//!
//! Node-level attention is masked additive attention per meta-path
//! (`leaky_relu(a_srcᵀ W h_i + a_dstᵀ W h_j)`, softmax over the neighbors of
//! `i` including `i`), with multi-head concatenation. Semantic attention
//! scores each meta-path by the node-averaged `qᵀ tanh(W h + b)` and mixes the
//! per-meta-path embeddings with the softmax of those scores.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::optim::Params;
use crate::diff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::SparseAdj;

/// Negative slope of the node-level attention LeakyReLU.
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Tanh,
    Prelu,
    Linear,
}

/// Activation bound to its parameter, when it has one.
#[derive(Debug, Clone, Copy)]
pub enum Act {
    Elu,
    Tanh,
    Prelu(Var),
    Linear,
}

pub fn activate(tape: &mut Tape, x: Var, act: Act) -> Result<Var> {
    match act {
        Act::Elu => tape.elu(x),
        Act::Tanh => tape.tanh(x),
        Act::Prelu(a) => tape.prelu(x, a),
        Act::Linear => Ok(x),
    }
}

/// Row features fed to a projection: a recorded matrix, or one-hot node
/// identity (in which case `X W = W`).
#[derive(Debug, Clone, Copy)]
pub enum NodeInput {
    Dense(Var),
    Identity,
}

pub fn project(tape: &mut Tape, x: NodeInput, w: Var) -> Result<Var> {
    match x {
        NodeInput::Dense(x) => tape.matmul(x, w),
        NodeInput::Identity => Ok(w),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w: Var,
    pub a_src: Var,
    pub a_dst: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct SemanticVars {
    pub w: Var,
    pub b: Var,
    pub q: Var,
}

/// One HAN layer: `heads[φ][h]` node-level parameters plus semantic attention.
#[derive(Debug, Clone)]
pub struct HanVars {
    pub heads: Vec<Vec<HeadVars>>,
    pub semantic: SemanticVars,
    pub act: Act,
}

#[derive(Debug, Clone)]
pub struct HanOutput {
    /// Per-meta-path embeddings `H^φ`.
    pub per_metapath: Vec<Var>,
    /// Semantic weights `α`, a Px1 column.
    pub alpha: Var,
    /// `Σ α^φ H^φ`.
    pub combined: Var,
    /// The `gat_aggregate` nodes, `[φ][h]`, for attention inspection.
    pub node_attention: Vec<Vec<Var>>,
}

/// Masked multi-head node-level attention over one adjacency pattern.
/// `adj` should already contain self-loops.
pub fn node_level_attention(
    tape: &mut Tape,
    adj: &Arc<SparseAdj>,
    x: NodeInput,
    heads: &[HeadVars],
    act: Act,
) -> Result<(Var, Vec<Var>)> {
    if heads.is_empty() {
        return Err(Error::Config("at least one attention head is required".into()));
    }
    let mut outs = Vec::with_capacity(heads.len());
    for h in heads {
        let hw = project(tape, x, h.w)?;
        let src = tape.matmul(hw, h.a_src)?;
        let dst = tape.matmul(hw, h.a_dst)?;
        outs.push(tape.gat_aggregate(adj, hw, src, dst, ATTENTION_SLOPE)?);
    }
    let cat = if outs.len() == 1 { outs[0] } else { tape.col_concat(&outs)? };
    Ok((activate(tape, cat, act)?, outs))
}

/// `s^φ = mean_i qᵀ tanh(W h_i^φ + b)`, `α = softmax(s)`, `H = Σ α^φ H^φ`.
pub fn semantic_attention(tape: &mut Tape, h_list: &[Var], sem: &SemanticVars) -> Result<(Var, Var)> {
    if h_list.is_empty() {
        return Err(Error::Config("semantic attention needs at least one meta-path".into()));
    }
    let mut scores = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let proj = tape.matmul(h, sem.w)?;
        let proj = tape.add_row(proj, sem.b)?;
        let t = tape.tanh(proj)?;
        let s = tape.matmul(t, sem.q)?;
        scores.push(tape.mean(s)?);
    }
    let stacked = tape.row_concat(&scores)?;
    let alpha = tape.softmax(stacked)?;
    let combined = weighted_sum(tape, alpha, h_list)?;
    Ok((alpha, combined))
}

/// `Σ_k w_k X_k` for a recorded Px1 weight column.
pub fn weighted_sum(tape: &mut Tape, weights: Var, xs: &[Var]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (k, &x) in xs.iter().enumerate() {
        let wk = tape.row_select(weights, &[k])?;
        let term = tape.scale_by(wk, x)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    acc.ok_or_else(|| Error::Config("empty weighted sum".into()))
}

/// One HAN layer over every meta-path adjacency (`g_E` / `g_D`).
pub fn han_layer(tape: &mut Tape, adjs: &[Arc<SparseAdj>], x: NodeInput, vars: &HanVars) -> Result<HanOutput> {
    if adjs.is_empty() {
        return Err(Error::Config("empty meta-path list".into()));
    }
    if adjs.len() != vars.heads.len() {
        return Err(Error::Config(format!(
            "{} adjacencies but parameters for {} meta-paths",
            adjs.len(),
            vars.heads.len()
        )));
    }
    let mut per = Vec::with_capacity(adjs.len());
    let mut att = Vec::with_capacity(adjs.len());
    for (adj, heads) in adjs.iter().zip(&vars.heads) {
        let (h, a) = node_level_attention(tape, adj, x, heads, vars.act)?;
        per.push(h);
        att.push(a);
    }
    let (alpha, combined) = semantic_attention(tape, &per, &vars.semantic)?;
    Ok(HanOutput { per_metapath: per, alpha, combined, node_attention: att })
}

pub fn han_encode(tape: &mut Tape, adjs: &[Arc<SparseAdj>], x: NodeInput, vars: &HanVars) -> Result<HanOutput> {
    han_layer(tape, adjs, x, vars)
}

/// Decoder: a single HAN layer from hidden space to the reconstruction space.
pub fn han_decode(tape: &mut Tape, adjs: &[Arc<SparseAdj>], h: Var, vars: &HanVars) -> Result<HanOutput> {
    han_layer(tape, adjs, NodeInput::Dense(h), vars)
}

/// Heterogeneous neighbors of the target type: incidence (target x type) and
/// the neighbor-type features.
#[derive(Debug, Clone)]
pub struct NeighborBlock {
    pub type_name: String,
    pub incidence: Arc<SparseAdj>,
    pub features: NodeInput,
}

/// `H_agg^i = act(h_i + Σ_T Σ_{v ∈ N_i^T} W_T x_v)`.
pub fn schema_aggregate(
    tape: &mut Tape,
    h_feat: Var,
    blocks: &[NeighborBlock],
    weights: &BTreeMap<String, Var>,
    act: Act,
) -> Result<Var> {
    let mut acc = h_feat;
    for b in blocks {
        let w = *weights
            .get(&b.type_name)
            .ok_or_else(|| Error::Schema(format!("no transformation for neighbor type `{}`", b.type_name)))?;
        let proj = project(tape, b.features, w)?;
        let msg = tape.spmm(&b.incidence, proj)?;
        acc = tape.add(acc, msg)?;
    }
    activate(tape, acc, act)
}

/// `act(Ã H W)`.
pub fn gcn_layer(tape: &mut Tape, norm_adj: &Arc<SparseAdj>, h: Var, w: Var, act: Act) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let prop = tape.spmm(norm_adj, hw)?;
    activate(tape, prop, act)
}

fn gcn_stack(tape: &mut Tape, norm_adj: &Arc<SparseAdj>, h: Var, ws: &[Var], act: Act) -> Result<Var> {
    let mut z = h;
    for &w in ws {
        z = gcn_layer(tape, norm_adj, z, w, act)?;
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy)]
pub struct ViewAttentionVars {
    pub w: Var,
    pub b: Var,
    pub a: Var,
}

#[derive(Debug, Clone)]
pub struct SchemaView {
    pub z: Var,
    /// View weights `β`, a Px1 column.
    pub beta: Var,
    pub per_metapath: Vec<Var>,
}

/// `z^φ = GCN(Ã^φ_sim, H_agg)`, `w^φ = mean_i aᵀ tanh(W_att z_i^φ + b_att)`,
/// `β = softmax(w)`, `Z_schema = Σ β^φ z^φ`.
pub fn schema_view_embed(
    tape: &mut Tape,
    h_agg: Var,
    norm_adjs: &[Arc<SparseAdj>],
    gcn_weights: &[Var],
    att: &ViewAttentionVars,
    act: Act,
) -> Result<SchemaView> {
    let z_list = norm_adjs
        .iter()
        .map(|a| gcn_stack(tape, a, h_agg, gcn_weights, act))
        .collect::<Result<Vec<_>>>()?;
    let (beta, z) = semantic_attention(tape, &z_list, &SemanticVars { w: att.w, b: att.b, q: att.a })?;
    Ok(SchemaView { z, beta, per_metapath: z_list })
}

/// `Z_fusion = act((Σ α^φ Ã^φ_sim) H_mp W)`, with `α` taken from the
/// generative channel's semantic attention (gradients flow through it).
pub fn fusion_view_embed(
    tape: &mut Tape,
    h_mp: Var,
    norm_adjs: &[Arc<SparseAdj>],
    alpha: Var,
    gcn_weights: &[Var],
    act: Act,
) -> Result<Var> {
    let a = tape.value(alpha);
    if a.len() != norm_adjs.len() {
        return Err(Error::dim("fusion_view_embed", format!("{} weights for {} adjacencies", a.len(), norm_adjs.len())));
    }
    let total: f64 = a.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("fusion weights sum to {total}, expected 1")));
    }
    let mut z = h_mp;
    for &w in gcn_weights {
        let hw = tape.matmul(z, w)?;
        let props = norm_adjs
            .iter()
            .map(|adj| tape.spmm(adj, hw))
            .collect::<Result<Vec<_>>>()?;
        let fused = weighted_sum(tape, alpha, &props)?;
        z = activate(tape, fused, act)?;
    }
    Ok(z)
}

/// `A' = σ(Z Zᵀ)`, the NxN node Gram matrix through a sigmoid.
pub fn reconstruct_adjacency(tape: &mut Tape, z: Var) -> Result<Var> {
    let zt = tape.transpose(z)?;
    let gram = tape.matmul(z, zt)?;
    tape.sigmoid(gram)
}

/// Uniform Glorot initialization, `U(-√(6/(fan_in+fan_out)), +…)`.
pub fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Shapes of one HAN layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct HanShape {
    pub metapaths: usize,
    pub heads: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub semantic_dim: usize,
}

/// Registers Glorot-initialized HAN parameters under `prefix`.
pub fn init_han(params: &mut Params, prefix: &str, shape: HanShape, rng: &mut impl Rng) -> Result<()> {
    if shape.heads == 0 || shape.out_dim % shape.heads != 0 {
        return Err(Error::Config(format!(
            "{prefix}: output dim {} is not divisible into {} heads",
            shape.out_dim, shape.heads
        )));
    }
    let d = shape.out_dim / shape.heads;
    for m in 0..shape.metapaths {
        for h in 0..shape.heads {
            let p = format!("{prefix}.mp{m}.h{h}");
            params.insert(format!("{p}.w"), glorot(rng, shape.in_dim, d));
            params.insert(format!("{p}.a_src"), glorot(rng, d, 1));
            params.insert(format!("{p}.a_dst"), glorot(rng, d, 1));
        }
    }
    params.insert(format!("{prefix}.sem.w"), glorot(rng, shape.out_dim, shape.semantic_dim));
    params.insert(format!("{prefix}.sem.b"), Array2::zeros((1, shape.semantic_dim)));
    params.insert(format!("{prefix}.sem.q"), glorot(rng, shape.semantic_dim, 1));
    Ok(())
}

/// Parameters bound onto a tape by name.
#[derive(Debug, Default, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Records every parameter as a gradient-carrying leaf.
    pub fn bind(tape: &mut Tape, params: &Params) -> Self {
        let vars = params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
        Bound { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn han(&self, prefix: &str, metapaths: usize, heads: usize, act: Act) -> Result<HanVars> {
        let heads = (0..metapaths)
            .map(|m| {
                (0..heads)
                    .map(|h| {
                        let p = format!("{prefix}.mp{m}.h{h}");
                        Ok(HeadVars {
                            w: self.get(&format!("{p}.w"))?,
                            a_src: self.get(&format!("{p}.a_src"))?,
                            a_dst: self.get(&format!("{p}.a_dst"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let semantic = SemanticVars {
            w: self.get(&format!("{prefix}.sem.w"))?,
            b: self.get(&format!("{prefix}.sem.b"))?,
            q: self.get(&format!("{prefix}.sem.q"))?,
        };
        Ok(HanVars { heads, semantic, act })
    }
}
