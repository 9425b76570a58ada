#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;
use std::sync::Arc;

use hetcrf::diff::check::{grad_check, GradCheckReport};
use hetcrf::diff::{RowSets, Tape, Var};
use hetcrf::graph::SparseAdj;
use hetcrf::metapath::PosMatrix;
use hetcrf::objectives::{contrastive_loss, metapath_recon_loss, pos_rowsets, scaled_cosine_error, ContrastiveOptions};
use hetcrf::Result;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(lo..hi))
}

pub fn adj(rng: &mut ChaCha8Rng, r: usize, c: usize, p: f64) -> SparseAdj {
    let mut trip = Vec::new();
    for i in 0..r {
        for j in 0..c {
            if rng.gen::<f64>() < p {
                trip.push((i, j, 1.0));
            }
        }
    }
    SparseAdj::from_triplets(r, c, trip).unwrap()
}

/// Random nonempty index sets, one per row, over `cols` columns.
pub fn rowsets(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RowSets {
    Arc::new(
        (0..rows)
            .map(|_| {
                let mut s: BTreeSet<usize> = (0..rng.gen_range(1..=cols)).map(|_| rng.gen_range(0..cols)).collect();
                if s.is_empty() {
                    s.insert(0);
                }
                s.into_iter().collect()
            })
            .collect(),
    )
}

/// Random positive sets containing the diagonal.
pub fn posmatrix(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> PosMatrix {
    PosMatrix::from_rows(
        (0..n)
            .map(|i| {
                let mut s: BTreeSet<usize> = (0..extra).map(|_| rng.gen_range(0..n)).collect();
                s.insert(i);
                s.into_iter().collect()
            })
            .collect(),
    )
    .unwrap()
}

/// Reduces a matrix output to a scalar by a fixed random projection, so a
/// constant row sum (softmax) still exercises every partial.
fn project(t: &mut Tape, out: Var, weights: &Array2<f64>) -> Result<Var> {
    let w = t.constant(weights.clone());
    let p = t.mul(out, w)?;
    t.sum(p)
}

type Case = (&'static str, GradCheckReport);

fn check(name: &'static str, point: Array2<f64>, f: impl Fn(&mut Tape, Var) -> Result<Var>) -> Case {
    (name, grad_check(f, &point, FD_STEP, FD_TOL).unwrap_or_else(|e| panic!("{name}: {e}")))
}

/// Finite-difference checks of every differentiable primitive, with respect
/// to each differentiable input, at random points drawn from `seed`.
pub fn primitive_suite(seed: u64) -> Vec<Case> {
    let mut r = rng(seed);
    let (n, d, k) = (r.gen_range(2..6), r.gen_range(2..5), r.gen_range(1..4));
    let a = mat(&mut r, n, d, -1.5, 1.5);
    let b = mat(&mut r, n, d, -1.5, 1.5);
    let w = mat(&mut r, d, k, -1.0, 1.0);
    let pos = mat(&mut r, n, d, 0.2, 2.0);
    let row = mat(&mut r, 1, d, -1.0, 1.0);
    let unit = mat(&mut r, 1, 1, 0.1, 0.9);
    let col = mat(&mut r, n, 1, -2.0, 2.0);
    let sq = mat(&mut r, n, n, -2.0, 2.0);
    let proj_nd = mat(&mut r, n, d, -1.0, 1.0);
    let proj_nk = mat(&mut r, n, k, -1.0, 1.0);
    let proj_dn = mat(&mut r, d, n, -1.0, 1.0);
    let proj_n1 = mat(&mut r, n, 1, -1.0, 1.0);
    let proj_2nd = mat(&mut r, 2 * n, d, -1.0, 1.0);
    let proj_n2d = mat(&mut r, n, 2 * d, -1.0, 1.0);
    let sp = Arc::new(adj(&mut r, n, n, 0.5).with_self_loops());
    let sets = rowsets(&mut r, n, n);
    let sel: Vec<usize> = (0..n + 2).map(|_| r.gen_range(0..n)).collect();
    let proj_sel = mat(&mut r, sel.len(), d, -1.0, 1.0);
    let mut replace: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.5)).collect();
    if replace.is_empty() {
        replace.push(0);
    }

    let mut out = Vec::new();
    out.push(check("matmul/lhs", a.clone(), |t, x| {
        let wv = t.constant(w.clone());
        let y = t.matmul(x, wv)?;
        project(t, y, &proj_nk)
    }));
    out.push(check("matmul/rhs", w.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.matmul(av, x)?;
        project(t, y, &proj_nk)
    }));
    out.push(check("add", a.clone(), |t, x| {
        let bv = t.constant(b.clone());
        let y = t.add(x, bv)?;
        let y = t.mul(y, y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("sub/rhs", b.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.sub(av, x)?;
        let y = t.mul(y, y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("elementwise-mul", a.clone(), |t, x| {
        let bv = t.constant(b.clone());
        let y = t.mul(x, bv)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("add-row/row", row.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.add_row(av, x)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("scalar-scale", a.clone(), |t, x| {
        let y = t.scale(x, -1.7)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("affine", a.clone(), |t, x| {
        let y = t.affine(x, 0.6, -0.3)?;
        let y = t.sigmoid(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("scale-by/scalar", unit.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.scale_by(x, av)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("scale-by/matrix", a.clone(), |t, x| {
        let s = t.constant(unit.clone());
        let y = t.scale_by(s, x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("transpose", a.clone(), |t, x| {
        let y = t.transpose(x)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_dn)
    }));
    out.push(check("row-concat", a.clone(), |t, x| {
        let bv = t.constant(b.clone());
        let y = t.row_concat(&[x, bv])?;
        let y = t.tanh(y)?;
        project(t, y, &proj_2nd)
    }));
    out.push(check("col-concat", a.clone(), |t, x| {
        let bv = t.constant(b.clone());
        let y = t.col_concat(&[bv, x])?;
        let y = t.sigmoid(y)?;
        project(t, y, &proj_n2d)
    }));
    out.push(check("row-select", a.clone(), |t, x| {
        let y = t.row_select(x, &sel)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_sel)
    }));
    out.push(check("row-replace/input", a.clone(), |t, x| {
        let tok = t.constant(row.clone());
        let y = t.row_replace(x, &replace, tok)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("row-replace/token", row.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.row_replace(av, &replace, x)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("softmax-over-vector", col.clone(), |t, x| {
        let y = t.softmax(x)?;
        project(t, y, &proj_n1)
    }));
    out.push(check("tanh", a.clone(), |t, x| {
        let y = t.tanh(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("sigmoid", a.clone(), |t, x| {
        let y = t.sigmoid(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("elu", a.clone(), |t, x| {
        let y = t.elu(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("leaky-relu", a.clone(), |t, x| {
        let y = t.leaky_relu(x, 0.2)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("prelu/input", a.clone(), |t, x| {
        let s = t.constant(unit.clone());
        let y = t.prelu(x, s)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("prelu/slope", unit.clone(), |t, x| {
        let av = t.constant(a.clone());
        let y = t.prelu(av, x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("exponential", a.clone(), |t, x| {
        let y = t.exp(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("clamp-min", a.clone(), |t, x| {
        let y = t.clamp_min(x, 0.05)?;
        let y = t.mul(y, y)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("logarithm", pos.clone(), |t, x| {
        let y = t.ln(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("power", pos.clone(), |t, x| {
        let y = t.pow(x, 2.5)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("row-l2-normalize", a.clone(), |t, x| {
        let y = t.row_l2_normalize(x)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("row-dot", a.clone(), |t, x| {
        let bv = t.constant(b.clone());
        let y = t.row_dot(x, bv)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_n1)
    }));
    out.push(check("sum", a.clone(), |t, x| {
        let y = t.tanh(x)?;
        t.sum(y)
    }));
    out.push(check("mean", a.clone(), |t, x| {
        let y = t.sigmoid(x)?;
        t.mean(y)
    }));
    out.push(check("sparse-dense-matmul", a.clone(), |t, x| {
        let y = t.spmm(&sp, x)?;
        let y = t.tanh(y)?;
        project(t, y, &proj_nd)
    }));
    let (src0, dst0) = (col.clone(), mat(&mut r, n, 1, -2.0, 2.0));
    out.push(check("gat-aggregate/features", a.clone(), |t, x| {
        let (s, q) = (t.constant(src0.clone()), t.constant(dst0.clone()));
        let y = t.gat_aggregate(&sp, x, s, q, 0.2)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("gat-aggregate/src", src0.clone(), |t, x| {
        let (h, q) = (t.constant(a.clone()), t.constant(dst0.clone()));
        let y = t.gat_aggregate(&sp, h, x, q, 0.2)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("gat-aggregate/dst", dst0.clone(), |t, x| {
        let (h, s) = (t.constant(a.clone()), t.constant(src0.clone()));
        let y = t.gat_aggregate(&sp, h, s, x, 0.2)?;
        project(t, y, &proj_nd)
    }));
    out.push(check("row-logsumexp/all", sq.clone(), |t, x| {
        let y = t.row_logsumexp(x, None)?;
        project(t, y, &proj_n1)
    }));
    out.push(check("row-logsumexp/sets", sq.clone(), |t, x| {
        let y = t.row_logsumexp(x, Some(&sets))?;
        project(t, y, &proj_n1)
    }));
    out.push(check("masked-row-mean", sq.clone(), |t, x| {
        let y = t.masked_row_mean(x, &sets)?;
        project(t, y, &proj_n1)
    }));
    out
}

/// Finite-difference checks of the three training losses with respect to
/// every differentiable input.
pub fn loss_suite(seed: u64) -> Vec<Case> {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let (n, d) = (r.gen_range(3..7), r.gen_range(2..5));
    let x = mat(&mut r, n, d, -1.0, 1.0);
    let z = mat(&mut r, n, d, -1.0, 1.0);
    let rows: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.6)).chain([0]).collect::<BTreeSet<_>>().into_iter().collect();
    let gamma = [1.0, 2.0, 3.0][r.gen_range(0..3)];
    let targets: Vec<Array2<f64>> = (0..2).map(|_| adj(&mut r, n, n, 0.4).to_dense()).collect();
    let recon: Vec<Array2<f64>> = (0..2).map(|_| mat(&mut r, n, n, 0.05, 0.95)).collect();
    let alpha_logits = mat(&mut r, 2, 1, -1.0, 1.0);
    let zf = mat(&mut r, n, d, -1.0, 1.0);
    let zs = mat(&mut r, n, d, -1.0, 1.0);
    let p = pos_rowsets(&posmatrix(&mut r, n, 2));
    let tau = [0.2, 0.5, 1.0][r.gen_range(0..3)];

    let sce = |t: &mut Tape, xv: Var, zv: Var| -> Result<Var> { Ok(scaled_cosine_error(t, xv, zv, Some(&rows), gamma)?.loss) };
    let mp = |t: &mut Tape, rec: [Var; 2], logits: Var| -> Result<Var> {
        let tg: Vec<Var> = targets.iter().map(|m| t.constant(m.clone())).collect();
        let alpha = t.softmax(logits)?;
        Ok(metapath_recon_loss(t, &tg, &rec, alpha, gamma)?.loss)
    };
    let con = |t: &mut Tape, f: Var, s: Var, opts: ContrastiveOptions| contrastive_loss(t, f, s, &p, tau, opts);
    let mean_logs = ContrastiveOptions { symmetrize: true, mean_of_logs: true };
    let one_way = ContrastiveOptions { symmetrize: false, mean_of_logs: false };

    vec![
        check("feature-sce/predictions", z.clone(), |t, v| {
            let xv = t.constant(x.clone());
            sce(t, xv, v)
        }),
        check("feature-sce/targets", x.clone(), |t, v| {
            let zv = t.constant(z.clone());
            sce(t, v, zv)
        }),
        check("metapath-recon/reconstruction", recon[0].clone(), |t, v| {
            let (r1, l) = (t.constant(recon[1].clone()), t.constant(alpha_logits.clone()));
            mp(t, [v, r1], l)
        }),
        check("metapath-recon/attention", alpha_logits.clone(), |t, v| {
            let (r0, r1) = (t.constant(recon[0].clone()), t.constant(recon[1].clone()));
            mp(t, [r0, r1], v)
        }),
        check("contrastive/fusion", zf.clone(), |t, v| {
            let s = t.constant(zs.clone());
            con(t, v, s, ContrastiveOptions::default())
        }),
        check("contrastive/schema", zs.clone(), |t, v| {
            let f = t.constant(zf.clone());
            con(t, f, v, ContrastiveOptions::default())
        }),
        check("contrastive/mean-of-logs", zf.clone(), |t, v| {
            let s = t.constant(zs.clone());
            con(t, v, s, mean_logs)
        }),
        check("contrastive/one-direction", zs.clone(), |t, v| {
            let f = t.constant(zf.clone());
            con(t, f, v, one_way)
        }),
    ]
}

/// Worst deviation from unit sum and smallest weight over every attention
/// distribution in the snapshot: α, β, and each node's neighbor weights per
/// meta-path and head.
pub fn attention_extremes(s: &hetcrf::trainer::AttentionSnapshot) -> (f64, f64) {
    let mut worst = (s.alpha.iter().sum::<f64>() - 1.0).abs().max((s.beta.iter().sum::<f64>() - 1.0).abs());
    let mut min = s.alpha.iter().chain(&s.beta).copied().fold(f64::INFINITY, f64::min);
    for (heads, ptr) in s.node.iter().zip(&s.node_indptr) {
        for w in heads {
            assert_eq!(w.len(), *ptr.last().unwrap());
            for row in ptr.windows(2) {
                let seg = &w[row[0]..row[1]];
                if !seg.is_empty() {
                    worst = worst.max((seg.iter().sum::<f64>() - 1.0).abs());
                    min = seg.iter().copied().fold(min, f64::min);
                }
            }
        }
    }
    (worst, min)
}

/// Observed keep rate of `mask_edges` over `seeds` on one random graph
/// holding about `edges` stored entries.
pub fn edge_keep_rates(edges: usize, p_e: f64, seeds: u64) -> Vec<f64> {
    let n = ((edges as f64) / 0.1).sqrt().ceil() as usize;
    let mut r = rng(12345);
    let a = adj(&mut r, n, n, edges as f64 / (n * n) as f64);
    (0..seeds)
        .map(|s| {
            let kept = hetcrf::masking::mask_edges(std::slice::from_ref(&a), p_e, s).unwrap();
            kept[0].nnz() as f64 / a.nnz() as f64
        })
        .collect()
}
