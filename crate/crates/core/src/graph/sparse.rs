//! Row-compressed sparse adjacency with nonnegative weights.
//!
//! Every meta-path operation is expressed over [`SparseAdj`]: composition is
//! a sparse product, thresholding keeps the pattern, normalization rescales
//! the stored weights in place.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdj {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdj {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseAdj {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseAdj {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, weight)` triplets; duplicate coordinates are
    /// summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, w) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::dim(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                ));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain {
                    op: "from_triplets",
                    detail: format!("weight {w} at ({r}, {c}) is not finite and nonnegative"),
                });
            }
            per_row[r].push((c, w));
        }
        let m = Self::from_rows(cols, per_row);
        if m.values.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain { op: "from_triplets", detail: "repeated entries sum to a non-finite weight".into() });
        }
        Ok(m)
    }

    /// Builds a {0,1} matrix from an edge list; repeated edges collapse.
    pub fn from_edges(
        rows: usize,
        cols: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut adj = Self::from_triplets(rows, cols, edges.into_iter().map(|(r, c)| (r, c, 1.0)))?;
        adj.values.iter_mut().for_each(|v| *v = 1.0);
        Ok(adj)
    }

    fn from_rows(cols: usize, per_row: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = per_row.len();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, w) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += w;
                } else {
                    indices.push(c);
                    values.push(w);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        SparseAdj {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(dense: ArrayView2<f64>) -> Result<Self> {
        let (rows, cols) = dense.dim();
        let trip = dense
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((r, c), &v)| (r, c, v))
            .collect::<Vec<_>>();
        Self::from_triplets(rows, cols, trip)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column indices and weights of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).0.binary_search(&c).is_ok()
    }

    /// Iterates over stored `(row, col, weight)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (c, v) = self.row(r);
            c.iter().zip(v).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseAdj {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for (r, c, v) in self.iter() {
            per_row[c].push((r, v));
        }
        Self::from_rows(self.rows, per_row)
    }

    /// Sparse product `self · rhs`, accumulating weights.
    pub fn matmul(&self, rhs: &SparseAdj) -> Result<SparseAdj> {
        if self.cols != rhs.rows {
            return Err(Error::dim(
                "sparse matmul",
                format!("{:?} x {:?}", self.shape(), rhs.shape()),
            ));
        }
        let mut acc = vec![0.0; rhs.cols];
        let mut touched = Vec::new();
        let mut mark = vec![false; rhs.cols];
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.rows {
            let (lc, lv) = self.row(r);
            for (&k, &a) in lc.iter().zip(lv) {
                let (rc, rv) = rhs.row(k);
                for (&c, &b) in rc.iter().zip(rv) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != 0.0 {
                    indices.push(c);
                    values.push(acc[c]);
                }
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
            indptr.push(indices.len());
        }
        Ok(SparseAdj {
            rows: self.rows,
            cols: rhs.cols,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps the pattern of entries with weight > 0, setting them to 1.
    pub fn to_binary(&self) -> SparseAdj {
        self.filter_map(|_, _, v| (v > 0.0).then_some(1.0))
    }

    pub fn without_diagonal(&self) -> SparseAdj {
        self.filter_map(|r, c, v| (r != c).then_some(v))
    }

    /// Returns a copy with a unit diagonal entry added to every row that lacks one.
    pub fn with_self_loops(&self) -> SparseAdj {
        let mut per_row: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            let mut row: Vec<(usize, f64)> = c.iter().copied().zip(v.iter().copied()).collect();
            if r < self.cols && c.binary_search(&r).is_err() {
                row.push((r, 1.0));
            }
            per_row.push(row);
        }
        Self::from_rows(self.cols, per_row)
    }

    /// Keeps entries for which `f` returns `Some(weight)`.
    pub fn filter_map(&self, mut f: impl FnMut(usize, usize, f64) -> Option<f64>) -> SparseAdj {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            for (&c, &v) in c.iter().zip(v) {
                if let Some(w) = f(r, c, v) {
                    indices.push(c);
                    values.push(w);
                }
            }
            indptr.push(indices.len());
        }
        SparseAdj {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    /// Same pattern, weights rewritten by `f(row, col, weight)`.
    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> SparseAdj {
        self.filter_map(|r, c, v| Some(f(r, c, v)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    /// Entrywise `self + scale * other`.
    pub fn add_scaled(&self, other: &SparseAdj, scale: f64) -> Result<SparseAdj> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "sparse add",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let trip = self
            .iter()
            .chain(other.iter().map(|(r, c, v)| (r, c, v * scale)));
        Self::from_triplets(self.rows, self.cols, trip)
    }

    pub fn scaled(&self, scale: f64) -> SparseAdj {
        self.map_values(|_, _, v| v * scale)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// Dense `self · x`.
    pub fn dot_dense(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.cols != x.nrows() {
            return Err(Error::dim(
                "sparse-dense matmul",
                format!("{:?} x {:?}", self.shape(), x.dim()),
            ));
        }
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            let mut orow = out.row_mut(r);
            for (&c, &w) in c.iter().zip(v) {
                orow.scaled_add(w, &x.row(c));
            }
        }
        Ok(out)
    }

    /// Dense `selfᵀ · g`, without materializing the transpose.
    pub fn t_dot_dense(&self, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.rows != g.nrows() {
            return Err(Error::dim(
                "sparse-dense matmul (transposed)",
                format!("{:?}ᵀ x {:?}", self.shape(), g.dim()),
            ));
        }
        let mut out = Array2::zeros((self.cols, g.ncols()));
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            let grow = g.row(r);
            for (&c, &w) in c.iter().zip(v) {
                out.row_mut(c).scaled_add(w, &grow);
            }
        }
        Ok(out)
    }

    /// Checks the structural invariants: sorted unique columns, finite
    /// nonnegative weights.
    pub fn validate(&self) -> Result<()> {
        if self.indptr.len() != self.rows + 1 || *self.indptr.last().unwrap() != self.indices.len() {
            return Err(Error::Contract("malformed row pointer".into()));
        }
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract(format!("row {r}: columns not strictly increasing")));
            }
            if c.iter().any(|&c| c >= self.cols) {
                return Err(Error::Contract(format!("row {r}: column out of range")));
            }
            if v.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Contract(format!("row {r}: invalid weight")));
            }
        }
        Ok(())
    }
}
