use rayon::prelude::*;

use crate::error::{check_len, Result};
use crate::linalg::DenseMatrix;

/// Rows per rayon task in sparse products; below this the loop stays serial.
const PAR_ROWS: usize = 4096;

/// Symmetric matrix in CSR form with both triangles stored and the diagonal
/// present on every row. Column indices within a row are ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl SparseSym {
    /// Build from sorted per-row column lists (each must contain its own row index).
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut diag_pos = vec![usize::MAX; n];
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                if j == i {
                    diag_pos[i] = col_idx.len();
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        assert!(
            diag_pos.iter().all(|&p| p != usize::MAX),
            "every row of a SparseSym must hold its diagonal"
        );
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            diag_pos,
        }
    }

    /// Same pattern, new values computed from `(i, j, old_value)`.
    pub fn map_values<F: Fn(usize, usize, f64) -> f64 + Sync>(&self, f: F) -> Self {
        let mut values = vec![0.0; self.values.len()];
        let fill = |i: usize, out: &mut [f64]| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for (k, o) in (a..b).zip(out.iter_mut()) {
                *o = f(i, self.col_idx[k], self.values[k]);
            }
        };
        split_rows_mut(&self.row_ptr, &mut values)
            .into_par_iter()
            .for_each(|(i, out)| fill(i, out));
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
            diag_pos: self.diag_pos.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Average stored entries per row (n_γ).
    pub fn avg_row_nnz(&self) -> f64 {
        self.nnz() as f64 / self.n as f64
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn diag(&self) -> Vec<f64> {
        self.diag_pos.iter().map(|&p| self.values[p]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        let row = |i: usize| -> f64 {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        };
        if self.n >= 2 * PAR_ROWS {
            y.par_chunks_mut(PAR_ROWS).enumerate().for_each(|(c, ys)| {
                for (o, yi) in ys.iter_mut().enumerate() {
                    *yi = row(c * PAR_ROWS + o);
                }
            });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("sparse matvec input", self.n, x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        Ok(y)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, _) = self.row(i);
            cols.iter().all(|&j| self.row(j).0.binary_search(&i).is_ok())
        })
    }
}

/// Rectangular CSR matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRect {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRect {
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            for (j, v) in row {
                debug_assert!(j < ncols);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn map_values<F: Fn(usize, usize, f64) -> f64 + Sync>(&self, f: F) -> Self {
        let mut values = vec![0.0; self.values.len()];
        split_rows_mut(&self.row_ptr, &mut values)
            .into_par_iter()
            .for_each(|(i, out)| {
                let a = self.row_ptr[i];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = f(i, self.col_idx[a + k], self.values[a + k]);
                }
            });
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `y = Aᵀ x`
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
    }

    /// Dense copy of one column.
    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.nrows];
        for (i, ci) in c.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            if let Ok(k) = cols.binary_search(&j) {
                *ci = vals[k];
            }
        }
        c
    }

    /// Transposed copy (CSR of Aᵀ).
    pub fn transpose(&self) -> SparseRect {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                rows[j].push((i, v));
            }
        }
        SparseRect::from_rows(self.nrows, rows)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Split a CSR value buffer into disjoint per-row slices.
fn split_rows_mut<'a>(row_ptr: &[usize], mut values: &'a mut [f64]) -> Vec<(usize, &'a mut [f64])> {
    let mut out = Vec::with_capacity(row_ptr.len().saturating_sub(1));
    for i in 0..row_ptr.len() - 1 {
        let len = row_ptr[i + 1] - row_ptr[i];
        let (head, tail) = values.split_at_mut(len);
        out.push((i, head));
        values = tail;
    }
    out
}
