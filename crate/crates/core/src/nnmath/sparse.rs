//! Compressed-sparse-row matrices.
//!
//! Invariants: `indptr.len() == rows + 1`, column indices strictly increasing
//! within each row, no explicit zeros stored.

use std::collections::BTreeMap;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// entries that sum to zero are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::shape(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                ));
            }
            *per_row[r].entry(c).or_insert(0.0) += v;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in per_row {
            for (c, v) in row {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Assembles a matrix from raw CSR arrays, validating the layout.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |d: &str| Err(Error::shape("from_raw", d.to_string()));
        if indptr.len() != rows + 1 || indptr[0] != 0 {
            return bad("indptr length or origin");
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return bad("indices/values length");
        }
        for r in 0..rows {
            if indptr[r] > indptr[r + 1] {
                return bad("indptr not monotone");
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.iter().any(|&c| c >= cols) || row.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices out of range or unsorted");
            }
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut indptr = Vec::with_capacity(d.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..d.rows() {
            for (c, &v) in d.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: d.rows(),
            cols: d.cols(),
            indptr,
            indices,
            values,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d.set(r, c, v);
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each output row stays sorted.
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Grows the matrix to `rows x cols` by appending empty rows/columns.
    pub fn resized(&self, rows: usize, cols: usize) -> Result<CsrMatrix> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::shape(
                "resized",
                format!("cannot shrink {:?} to ({rows}, {cols})", self.shape()),
            ));
        }
        let mut out = self.clone();
        out.rows = rows;
        out.cols = cols;
        let last = *out.indptr.last().unwrap();
        out.indptr.resize(rows + 1, last);
        Ok(out)
    }

    /// Exact structural and numeric symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    pub fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = f(r, self.indices[k], self.values[k]);
            }
        }
        out.prune_zeros()
    }

    fn prune_zeros(self) -> CsrMatrix {
        if self.values.iter().all(|&v| v != 0.0) {
            return self;
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }
}

/// Sparse × sparse product (row-by-row accumulation with a dense scratch row).
pub fn spgemm(a: &CsrMatrix, b: &CsrMatrix) -> Result<CsrMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "spgemm",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut acc = vec![0.0f64; b.cols];
    let mut touched = vec![false; b.cols];
    let mut pattern: Vec<usize> = Vec::new();
    let mut indptr = Vec::with_capacity(a.rows + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for r in 0..a.rows {
        let (a_cols, a_vals) = a.row(r);
        for (&k, &av) in a_cols.iter().zip(a_vals) {
            let (b_cols, b_vals) = b.row(k);
            for (&c, &bv) in b_cols.iter().zip(b_vals) {
                if !touched[c] {
                    touched[c] = true;
                    pattern.push(c);
                }
                acc[c] += av * bv;
            }
        }
        pattern.sort_unstable();
        for &c in &pattern {
            if acc[c] != 0.0 {
                indices.push(c);
                values.push(acc[c]);
            }
            acc[c] = 0.0;
            touched[c] = false;
        }
        pattern.clear();
        indptr.push(indices.len());
    }
    Ok(CsrMatrix {
        rows: a.rows,
        cols: b.cols,
        indptr,
        indices,
        values,
    })
}

/// `s · d` for sparse `s` and dense `d`.
pub fn spmm(s: &CsrMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols != d.rows() {
        return Err(Error::shape(
            "spmm",
            format!("{:?} x {:?}", s.shape(), d.shape()),
        ));
    }
    let n = d.cols();
    let mut out = DenseMatrix::zeros(s.rows, n);
    for r in 0..s.rows {
        let (cols, vals) = s.row(r);
        let out_row = out.row_mut(r);
        for (&k, &v) in cols.iter().zip(vals) {
            for (o, x) in out_row.iter_mut().zip(d.row(k)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// `sᵀ · d` without materializing the transpose.
pub fn spmm_tn(s: &CsrMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if s.rows != d.rows() {
        return Err(Error::shape(
            "spmm_tn",
            format!("{:?}ᵀ x {:?}", s.shape(), d.shape()),
        ));
    }
    let n = d.cols();
    let mut out = DenseMatrix::zeros(s.cols, n);
    for r in 0..s.rows {
        let (cols, vals) = s.row(r);
        let d_row = d.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for (o, x) in out.row_mut(c).iter_mut().zip(d_row) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}
