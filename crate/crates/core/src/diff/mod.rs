//! Dense-matrix reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive application in evaluation order; values
//! are `f64` matrices. [`Tape::backward`] walks the record once in reverse and
//! accumulates vector-Jacobian products into every input that requires a
//! gradient. Sparse adjacencies enter only as constants.
//!
//! ```
//! use hetcrf::diff::Tape;
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(array![[0.0, 0.0], [0.0, 0.0]]);
//! let s = tape.sigmoid(w).unwrap();
//! let loss = tape.sum(s).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(&tape, w), array![[0.25, 0.25], [0.25, 0.25]]);
//! ```

pub mod check;
pub mod optim;

use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::graph::SparseAdj;

/// Per-row index sets used by masked row reductions.
pub type RowSets = Arc<Vec<Vec<usize>>>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Affine(Var, f64),
    ScaleBy(Var, Var),
    Transpose(Var),
    RowConcat(Vec<Var>),
    ColConcat(Vec<Var>),
    RowSelect(Var, Vec<usize>),
    RowReplace(Var, Vec<usize>, Var),
    Softmax(Var),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Prelu(Var, Var),
    Exp(Var),
    ClampMin(Var, f64),
    Ln(Var),
    Pow(Var, f64),
    RowL2Normalize(Var, Vec<f64>),
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
    SpMM(Arc<SparseAdj>, Var),
    Gat {
        adj: Arc<SparseAdj>,
        h: Var,
        src: Var,
        dst: Var,
        slope: f64,
        att: Vec<f64>,
        pre: Vec<f64>,
    },
    RowLogSumExp(Var, Option<RowSets>),
    MaskedRowMean(Var, RowSets),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of its shape when it was not reached.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Array2<f64> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim()))
    }
}

fn shape_str(a: &Array2<f64>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

fn check_rowsets(op: &'static str, sets: &[Vec<usize>], rows: usize, cols: usize) -> Result<()> {
    if sets.len() != rows {
        return Err(Error::dim(op, format!("{} row sets for {rows} rows", sets.len())));
    }
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::dim(op, format!("row {i} has an empty index set")));
        }
        if s.iter().any(|&j| j >= cols) {
            return Err(Error::dim(op, format!("row {i} indexes past {cols} columns")));
        }
    }
    Ok(())
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 var.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, name: &'static str, value: Array2<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { op: name, detail: "non-finite output".into() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.dim() != y.dim() {
            return Err(Error::dim(op, format!("{} vs {}", shape_str(x), shape_str(y))));
        }
        Ok(())
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.value(x).mapv(f);
        self.push(name, out, op, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(Error::dim("matmul", format!("{} x {}", shape_str(x), shape_str(y))));
        }
        let out = x.dot(y);
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    /// Adds a 1xn row vector to every row of an mxn matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, r) = (self.value(x), self.value(row));
        if r.nrows() != 1 || r.ncols() != m.ncols() {
            return Err(Error::dim("add_row", format!("{} + {}", shape_str(m), shape_str(r))));
        }
        let out = m + r;
        self.push("add_row", out, Op::AddRow(x, row), &[x, row])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary("scale", x, |v| v * c, Op::Scale(x, c))
    }

    /// `a * x + b` with constant `a`, `b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Result<Var> {
        self.unary("affine", x, |v| a * v + b, Op::Affine(x, a))
    }

    /// Multiplies a matrix by a recorded 1x1 scalar.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.dim() != (1, 1) {
            return Err(Error::dim("scale_by", format!("scalar operand is {}", shape_str(sv))));
        }
        let c = sv[[0, 0]];
        let out = self.value(x) * c;
        self.push("scale_by", out, Op::ScaleBy(s, x), &[s, x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).t().to_owned();
        self.push("transpose", out, Op::Transpose(x), &[x])
    }

    /// Stacks matrices vertically.
    pub fn row_concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::dim("row_concat", "no inputs"));
        }
        let views: Vec<_> = xs.iter().map(|&v| self.value(v).view()).collect();
        let out = concatenate(Axis(0), &views).map_err(|e| Error::dim("row_concat", e.to_string()))?;
        self.push("row_concat", out, Op::RowConcat(xs.to_vec()), xs)
    }

    /// Stacks matrices horizontally.
    pub fn col_concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::dim("col_concat", "no inputs"));
        }
        let views: Vec<_> = xs.iter().map(|&v| self.value(v).view()).collect();
        let out = concatenate(Axis(1), &views).map_err(|e| Error::dim("col_concat", e.to_string()))?;
        self.push("col_concat", out, Op::ColConcat(xs.to_vec()), xs)
    }

    /// Gathers rows (repeats allowed).
    pub fn row_select(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let m = self.value(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= m.nrows()) {
            return Err(Error::dim("row_select", format!("row {bad} of {}", shape_str(m))));
        }
        let out = m.select(Axis(0), rows);
        self.push("row_select", out, Op::RowSelect(x, rows.to_vec()), &[x])
    }

    /// Replaces the listed (distinct) rows of `x` by the 1xd row `token`.
    pub fn row_replace(&mut self, x: Var, rows: &[usize], token: Var) -> Result<Var> {
        let (m, t) = (self.value(x), self.value(token));
        if t.nrows() != 1 || t.ncols() != m.ncols() {
            return Err(Error::dim("row_replace", format!("token {} for {}", shape_str(t), shape_str(m))));
        }
        let mut seen = vec![false; m.nrows()];
        for &r in rows {
            if r >= m.nrows() || std::mem::replace(&mut seen[r], true) {
                return Err(Error::dim("row_replace", format!("row {r} out of range or repeated")));
            }
        }
        let mut out = m.clone();
        for &r in rows {
            out.row_mut(r).assign(&t.row(0));
        }
        self.push("row_replace", out, Op::RowReplace(x, rows.to_vec(), token), &[x, token])
    }

    /// Softmax over all entries of a row or column vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        if m.nrows() != 1 && m.ncols() != 1 {
            return Err(Error::dim("softmax", format!("expected a vector, got {}", shape_str(m))));
        }
        let mx = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = m.mapv(|v| (v - mx).exp());
        let z = out.sum();
        out /= z;
        self.push("softmax", out, Op::Softmax(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.unary("elu", x, elu, Op::Elu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary("leaky_relu", x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    /// PReLU with a learnable 1x1 negative slope.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let s = self.value(slope);
        if s.dim() != (1, 1) {
            return Err(Error::dim("prelu", format!("slope is {}", shape_str(s))));
        }
        let a = s[[0, 0]];
        let out = self.value(x).mapv(|v| if v > 0.0 { v } else { a * v });
        self.push("prelu", out, Op::Prelu(x, slope), &[x, slope])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, f64::exp, Op::Exp(x))
    }

    /// `max(x, lo)`; the gradient passes only where `x > lo`.
    pub fn clamp_min(&mut self, x: Var, lo: f64) -> Result<Var> {
        self.unary("clamp_min", x, |v| v.max(lo), Op::ClampMin(x, lo))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain { op: "ln", detail: format!("argument {bad} is not positive") });
        }
        self.unary("ln", x, f64::ln, Op::Ln(x))
    }

    /// Elementwise `x^p` for nonnegative `x` and `p >= 1`.
    pub fn pow(&mut self, x: Var, p: f64) -> Result<Var> {
        if p < 1.0 || !p.is_finite() {
            return Err(Error::Domain { op: "pow", detail: format!("exponent {p} must be >= 1") });
        }
        if let Some(bad) = self.value(x).iter().find(|&&v| v < 0.0) {
            return Err(Error::Domain { op: "pow", detail: format!("base {bad} is negative") });
        }
        self.unary("pow", x, |v| v.powf(p), Op::Pow(x, p))
    }

    /// Scales each row to unit L2 norm; all-zero rows stay zero.
    pub fn row_l2_normalize(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        let norms: Vec<f64> = m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut out = m.clone();
        for (mut r, &n) in out.rows_mut().into_iter().zip(&norms) {
            if n > 0.0 {
                r /= n;
            }
        }
        self.push("row_l2_normalize", out, Op::RowL2Normalize(x, norms), &[x])
    }

    /// Per-row inner products, as an nx1 column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let out = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| x.row(i).dot(&y.row(i)));
        self.push("row_dot", out, Op::RowDot(a, b), &[a, b])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Array2::from_elem((1, 1), s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        if m.is_empty() {
            return Err(Error::dim("mean", "empty input"));
        }
        let s = m.sum() / m.len() as f64;
        self.push("mean", Array2::from_elem((1, 1), s), Op::Mean(x), &[x])
    }

    /// Constant sparse matrix times a recorded dense matrix.
    pub fn spmm(&mut self, adj: &Arc<SparseAdj>, x: Var) -> Result<Var> {
        let out = adj
            .dot_dense(self.value(x).view())
            .map_err(|_| Error::dim("spmm", format!("{:?} x {}", adj.shape(), shape_str(self.value(x)))))?;
        self.push("spmm", out, Op::SpMM(adj.clone(), x), &[x])
    }

    /// Masked additive attention aggregation over the pattern of `adj`:
    /// `e_ij = leaky(src_i + dst_j)`, `att_i· = softmax_j(e_i·)` over the
    /// stored entries of row `i`, `out_i = Σ_j att_ij h_j`. Rows with no
    /// entries produce zeros.
    pub fn gat_aggregate(&mut self, adj: &Arc<SparseAdj>, h: Var, src: Var, dst: Var, slope: f64) -> Result<Var> {
        let (hv, sv, dv) = (self.value(h), self.value(src), self.value(dst));
        let n = adj.rows();
        if adj.cols() != hv.nrows() || sv.dim() != (n, 1) || dv.dim() != (hv.nrows(), 1) {
            return Err(Error::dim(
                "gat_aggregate",
                format!("adj {:?}, h {}, src {}, dst {}", adj.shape(), shape_str(hv), shape_str(sv), shape_str(dv)),
            ));
        }
        let mut att = vec![0.0; adj.nnz()];
        let mut pre = vec![0.0; adj.nnz()];
        let mut out = Array2::zeros((n, hv.ncols()));
        let mut off = 0;
        for i in 0..n {
            let (cols, _) = adj.row(i);
            if cols.is_empty() {
                continue;
            }
            let k = cols.len();
            let (a, p) = (&mut att[off..off + k], &mut pre[off..off + k]);
            for (t, &j) in cols.iter().enumerate() {
                p[t] = sv[[i, 0]] + dv[[j, 0]];
                let e = if p[t] > 0.0 { p[t] } else { slope * p[t] };
                a[t] = e;
            }
            let mx = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in a.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            let mut orow = out.row_mut(i);
            for (t, &j) in cols.iter().enumerate() {
                a[t] /= z;
                orow.scaled_add(a[t], &hv.row(j));
            }
            off += k;
        }
        let op = Op::Gat { adj: adj.clone(), h, src, dst, slope, att, pre };
        self.push("gat_aggregate", out, op, &[h, src, dst])
    }

    /// Attention weights computed by a `gat_aggregate` node, in the stored
    /// order of its adjacency.
    pub fn attention_weights(&self, v: Var) -> Option<(&SparseAdj, &[f64])> {
        match &self.nodes[v.0].op {
            Op::Gat { adj, att, .. } => Some((adj, att)),
            _ => None,
        }
    }

    /// `out_i = log Σ_{j ∈ S_i} exp(x_ij)` as an nx1 column; `S_i` is every
    /// column when `sets` is `None`.
    pub fn row_logsumexp(&mut self, x: Var, sets: Option<&RowSets>) -> Result<Var> {
        let m = self.value(x);
        if let Some(s) = sets {
            check_rowsets("row_logsumexp", s, m.nrows(), m.ncols())?;
        } else if m.ncols() == 0 {
            return Err(Error::dim("row_logsumexp", "no columns"));
        }
        let lse = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
        };
        let out = Array2::from_shape_fn((m.nrows(), 1), |(i, _)| match sets {
            Some(s) => lse(&mut s[i].iter().map(|&j| m[[i, j]])),
            None => lse(&mut m.row(i).iter().copied()),
        });
        self.push("row_logsumexp", out, Op::RowLogSumExp(x, sets.cloned()), &[x])
    }

    /// `out_i = mean_{j ∈ S_i} x_ij` as an nx1 column.
    pub fn masked_row_mean(&mut self, x: Var, sets: &RowSets) -> Result<Var> {
        let m = self.value(x);
        check_rowsets("masked_row_mean", sets, m.nrows(), m.ncols())?;
        let out = Array2::from_shape_fn((m.nrows(), 1), |(i, _)| {
            sets[i].iter().map(|&j| m[[i, j]]).sum::<f64>() / sets[i].len() as f64
        });
        self.push("masked_row_mean", out, Op::MaskedRowMean(x, sets.clone()), &[x])
    }

    /// Reverse-mode gradients of a 1x1 `loss` for every recorded value that
    /// requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                shape_str(self.value(loss))
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.vjp(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let y = &self.nodes[idx].value;
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => *e += &d,
                slot @ None => *slot = Some(d),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.dot(&val(*b).t()));
                acc(*b, val(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * val(*b));
                acc(*b, g * val(*a));
            }
            Op::AddRow(x, r) => {
                acc(*x, g.clone());
                acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(x, c) | Op::Affine(x, c) => acc(*x, g * *c),
            Op::ScaleBy(s, x) => {
                let c = val(*s)[[0, 0]];
                acc(*s, Array2::from_elem((1, 1), (g * val(*x)).sum()));
                acc(*x, g * c);
            }
            Op::Transpose(x) => acc(*x, g.t().to_owned()),
            Op::RowConcat(xs) => {
                let mut off = 0;
                for &x in xs {
                    let r = val(x).nrows();
                    acc(x, g.slice(ndarray::s![off..off + r, ..]).to_owned());
                    off += r;
                }
            }
            Op::ColConcat(xs) => {
                let mut off = 0;
                for &x in xs {
                    let c = val(x).ncols();
                    acc(x, g.slice(ndarray::s![.., off..off + c]).to_owned());
                    off += c;
                }
            }
            Op::RowSelect(x, rows) => {
                let mut d = Array2::zeros(val(*x).raw_dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dr = d.row_mut(r);
                    dr += &g.row(k);
                }
                acc(*x, d);
            }
            Op::RowReplace(x, rows, token) => {
                let mut dx = g.clone();
                let mut dt = Array2::zeros((1, g.ncols()));
                for &r in rows {
                    let mut t = dt.row_mut(0);
                    t += &g.row(r);
                    dx.row_mut(r).fill(0.0);
                }
                acc(*x, dx);
                acc(*token, dt);
            }
            Op::Softmax(x) => {
                let dot = (g * y).sum();
                acc(*x, y * &g.mapv(|v| v - dot));
            }
            Op::Tanh(x) => acc(*x, g * &y.mapv(|t| 1.0 - t * t)),
            Op::Sigmoid(x) => acc(*x, g * &y.mapv(|s| s * (1.0 - s))),
            Op::Elu(x) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*x)).and(y).for_each(|d, &xv, &yv| {
                    if xv <= 0.0 {
                        *d *= yv + 1.0;
                    }
                });
                acc(*x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*x)).for_each(|d, &xv| {
                    if xv <= 0.0 {
                        *d *= slope;
                    }
                });
                acc(*x, d);
            }
            Op::Prelu(x, slope) => {
                let a = val(*slope)[[0, 0]];
                let mut d = g.clone();
                let mut ds = 0.0;
                Zip::from(&mut d).and(val(*x)).for_each(|d, &xv| {
                    if xv <= 0.0 {
                        ds += *d * xv;
                        *d *= a;
                    }
                });
                acc(*x, d);
                acc(*slope, Array2::from_elem((1, 1), ds));
            }
            Op::Exp(x) => acc(*x, g * y),
            Op::ClampMin(x, lo) => {
                let lo = *lo;
                let mut d = g.clone();
                d.zip_mut_with(val(*x), |d, &v| {
                    if v <= lo {
                        *d = 0.0;
                    }
                });
                acc(*x, d);
            }
            Op::Ln(x) => acc(*x, g / val(*x)),
            Op::Pow(x, p) => {
                let p = *p;
                acc(*x, g * &val(*x).mapv(|v| if p == 1.0 { 1.0 } else { p * v.powf(p - 1.0) }));
            }
            Op::RowL2Normalize(x, norms) => {
                let mut d = Array2::zeros(g.raw_dim());
                for (i, &n) in norms.iter().enumerate() {
                    if n > 0.0 {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let proj = yr.dot(&gr);
                        let mut dr = d.row_mut(i);
                        dr.assign(&((&gr - &(&yr * proj)) / n));
                    }
                }
                acc(*x, d);
            }
            Op::RowDot(a, b) => {
                let col = g.column(0).insert_axis(Axis(1));
                acc(*a, val(*b) * &col);
                acc(*b, val(*a) * &col);
            }
            Op::Sum(x) => acc(*x, Array2::from_elem(val(*x).raw_dim(), g[[0, 0]])),
            Op::Mean(x) => {
                let m = val(*x);
                acc(*x, Array2::from_elem(m.raw_dim(), g[[0, 0]] / m.len() as f64));
            }
            Op::SpMM(adj, x) => acc(*x, adj.t_dot_dense(g.view()).expect("shape checked in forward")),
            Op::Gat { adj, h, src, dst, slope, att, pre } => {
                let hv = val(*h);
                let mut dh = Array2::zeros(hv.raw_dim());
                let mut dsrc = Array2::zeros((adj.rows(), 1));
                let mut ddst = Array2::zeros((hv.nrows(), 1));
                let mut off = 0;
                let mut datt = Vec::new();
                for i in 0..adj.rows() {
                    let (cols, _) = adj.row(i);
                    let k = cols.len();
                    if k == 0 {
                        continue;
                    }
                    let a = &att[off..off + k];
                    let gi = g.row(i);
                    datt.clear();
                    for (t, &j) in cols.iter().enumerate() {
                        dh.row_mut(j).scaled_add(a[t], &gi);
                        datt.push(gi.dot(&hv.row(j)));
                    }
                    let mean: f64 = a.iter().zip(&datt).map(|(a, d)| a * d).sum();
                    for (t, &j) in cols.iter().enumerate() {
                        let de = a[t] * (datt[t] - mean);
                        let dp = if pre[off + t] > 0.0 { de } else { slope * de };
                        dsrc[[i, 0]] += dp;
                        ddst[[j, 0]] += dp;
                    }
                    off += k;
                }
                acc(*h, dh);
                acc(*src, dsrc);
                acc(*dst, ddst);
            }
            Op::RowLogSumExp(x, sets) => {
                let xv = val(*x);
                let mut d = Array2::zeros(xv.raw_dim());
                for i in 0..xv.nrows() {
                    let (gi, yi) = (g[[i, 0]], y[[i, 0]]);
                    match sets {
                        Some(s) => {
                            for &j in &s[i] {
                                d[[i, j]] += gi * (xv[[i, j]] - yi).exp();
                            }
                        }
                        None => {
                            for j in 0..xv.ncols() {
                                d[[i, j]] = gi * (xv[[i, j]] - yi).exp();
                            }
                        }
                    }
                }
                acc(*x, d);
            }
            Op::MaskedRowMean(x, sets) => {
                let mut d = Array2::zeros(val(*x).raw_dim());
                for (i, s) in sets.iter().enumerate() {
                    let w = g[[i, 0]] / s.len() as f64;
                    for &j in s {
                        d[[i, j]] += w;
                    }
                }
                acc(*x, d);
            }
        }
    }
}
