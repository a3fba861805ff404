//! Dense linear algebra helpers on top of `faer`, plus the small vector
//! kernels and the symmetric tridiagonal eigensolver used by the Krylov code.

use faer::linalg::solvers::{DenseSolveCore, Llt};
use faer::{Mat, MatMut, MatRef, Side};

use crate::error::{GpError, Result};

pub type DenseMatrix = Mat<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators so the loop vectorizes; the order is fixed so results
    // are reproducible for a given length.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Mᵀ x` for a column-major `m` (one dot product per column).
pub fn mat_t_vec(m: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.nrows(), x.len());
    debug_assert_eq!(m.ncols(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(m.col_as_slice(j), x);
    }
}

/// `M x` for a column-major `m` (axpy over columns).
pub fn mat_vec(m: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.ncols(), x.len());
    debug_assert_eq!(m.nrows(), out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, m.col_as_slice(j), out);
        }
    }
}

/// Squared Euclidean norm of every column.
pub fn col_sq_norms(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| {
            let c = m.col(j);
            (0..m.nrows()).map(|i| c[i] * c[i]).sum()
        })
        .collect()
}

/// Lower Cholesky factor `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    llt: Option<Llt<f64>>,
}

impl Cholesky {
    pub fn new(a: MatRef<'_, f64>, stage: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(GpError::Dimension {
                what: "Cholesky input columns",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Ok(Self { llt: None });
        }
        let llt = a.llt(Side::Lower).map_err(|_| GpError::NotPositiveDefinite {
            stage: stage.to_string(),
        })?;
        Ok(Self { llt: Some(llt) })
    }

    pub fn dim(&self) -> usize {
        self.llt.as_ref().map_or(0, |l| l.L().nrows())
    }

    pub fn factor(&self) -> MatRef<'_, f64> {
        match &self.llt {
            Some(l) => l.L(),
            None => MatRef::from_column_major_slice(&[], 0, 0),
        }
    }

    pub fn logdet(&self) -> f64 {
        let l = self.factor();
        2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `rhs ← L⁻¹ rhs`
    pub fn solve_lower_in_place(&self, rhs: MatMut<'_, f64>) {
        if self.dim() > 0 {
            self.factor().solve_lower_triangular_in_place(rhs);
        }
    }

    /// `rhs ← L⁻ᵀ rhs`
    pub fn solve_upper_in_place(&self, rhs: MatMut<'_, f64>) {
        if self.dim() > 0 {
            self.factor().transpose().solve_upper_triangular_in_place(rhs);
        }
    }

    /// `rhs ← A⁻¹ rhs`
    pub fn solve_in_place(&self, mut rhs: MatMut<'_, f64>) {
        self.solve_lower_in_place(rhs.as_mut());
        self.solve_upper_in_place(rhs);
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
        x
    }

    pub fn solve_lower_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
        x
    }

    pub fn solve_upper_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_upper_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
        x
    }

    /// `L x`
    pub fn mul_lower_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let l = self.factor();
        let mut out = vec![0.0; n];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for i in j..n {
                out[i] += l[(i, j)] * xj;
            }
        }
        out
    }

    pub fn inverse(&self) -> DenseMatrix {
        match &self.llt {
            Some(l) => l.inverse(),
            None => Mat::zeros(0, 0),
        }
    }
}

/// Eigenvalues of a dense symmetric matrix (ascending).
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| GpError::Numerical(format!("eigenvalue solver failed: {e:?}")))?;
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Symmetric tridiagonal matrix stored by its diagonal and off-diagonal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TridiagMatrix {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Self {
        assert!(
            offdiag.len() + 1 == diag.len() || (diag.is_empty() && offdiag.is_empty()),
            "tridiagonal off-diagonal must have length k - 1"
        );
        Self { diag, offdiag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let k = self.dim();
        Mat::from_fn(k, k, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.offdiag[i]
            } else if j + 1 == i {
                self.offdiag[j]
            } else {
                0.0
            }
        })
    }

    /// Eigenvalues (unsorted) and the first component of every normalized eigenvector.
    pub fn eigen_first_components(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.dim();
        let mut first = vec![0.0; k];
        if k > 0 {
            first[0] = 1.0;
        }
        let mut rows = vec![first];
        let vals = self.implicit_ql(&mut rows)?;
        Ok((vals, rows.pop().unwrap_or_default()))
    }

    /// Eigenvalues and full eigenvector matrix (row `r`, column `j` = component `r` of vector `j`).
    pub fn eigen(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.dim();
        let mut rows: Vec<Vec<f64>> = (0..k)
            .map(|r| (0..k).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let vals = self.implicit_ql(&mut rows)?;
        Ok((vals, rows))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut none: Vec<Vec<f64>> = Vec::new();
        let mut v = self.implicit_ql(&mut none)?;
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(v)
    }

    /// `e₁ᵀ f(T) e₁ = Σⱼ U₁ⱼ² f(λⱼ)`
    pub fn quadratic_form_e1<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let (vals, first) = self.eigen_first_components()?;
        Ok(vals.iter().zip(&first).map(|(&l, &u)| u * u * f(l)).sum())
    }

    /// Implicit QL iteration with Wilkinson shifts; the Givens rotations are
    /// applied to every row in `rows`.
    fn implicit_ql(&self, rows: &mut [Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = self.offdiag.clone();
        e.push(0.0);
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 100 {
                    return Err(GpError::Numerical(
                        "tridiagonal QL iteration did not converge".into(),
                    ));
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut deflated = false;
                let mut i = m;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        deflated = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for row in rows.iter_mut() {
                        let f = row[i + 1];
                        row[i + 1] = s * row[i] + c * f;
                        row[i] = c * row[i] - s * f;
                    }
                }
                if deflated {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        Ok(d)
    }

    /// Solve `T x = b` by the Thomas algorithm (T assumed nonsingular and
    /// well-conditioned, as for Lanczos matrices of SPD operators).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.dim();
        let mut cp = vec![0.0; k];
        let mut dp = vec![0.0; k];
        for i in 0..k {
            let sub = if i > 0 { self.offdiag[i - 1] } else { 0.0 };
            let denom = self.diag[i] - sub * if i > 0 { cp[i - 1] } else { 0.0 };
            cp[i] = if i + 1 < k { self.offdiag[i] / denom } else { 0.0 };
            dp[i] = (b[i] - sub * if i > 0 { dp[i - 1] } else { 0.0 }) / denom;
        }
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            x[i] = dp[i] - if i + 1 < k { cp[i] * x[i + 1] } else { 0.0 };
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_eigenvalues_match_dense_solver() {
        let t = TridiagMatrix::new(vec![4.0, 3.0, 2.5, 1.0, 6.0], vec![1.0, -0.5, 0.3, 2.0]);
        let ql = t.eigenvalues().unwrap();
        let dense = symmetric_eigenvalues(t.to_dense().as_ref()).unwrap();
        for (a, b) in ql.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn first_components_reconstruct_e1_quadratic_forms() {
        let t = TridiagMatrix::new(vec![2.0, 3.0, 4.0], vec![0.5, 0.25]);
        // e1ᵀ T e1 = T11, e1ᵀ T² e1 = T11² + T12².
        let q1 = t.quadratic_form_e1(|l| l).unwrap();
        let q2 = t.quadratic_form_e1(|l| l * l).unwrap();
        let q0 = t.quadratic_form_e1(|_| 1.0).unwrap();
        assert!((q0 - 1.0).abs() < 1e-14);
        assert!((q1 - 2.0).abs() < 1e-13);
        assert!((q2 - (4.0 + 0.25)).abs() < 1e-13);
    }

    #[test]
    fn full_eigenvectors_are_orthonormal() {
        let t = TridiagMatrix::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.1, 0.2, 0.3]);
        let (vals, rows) = t.eigen().unwrap();
        let k = vals.len();
        for a in 0..k {
            for b in 0..k {
                let s: f64 = (0..k).map(|r| rows[r][a] * rows[r][b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thomas_solve_inverts_tridiagonal() {
        let t = TridiagMatrix::new(vec![4.0, 5.0, 6.0, 7.0], vec![1.0, 2.0, -1.0]);
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = t.solve(&b);
        let dense = t.to_dense();
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| dense[(i, j)] * x[j]).sum();
            assert!((row - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_and_logdet() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let c = Cholesky::new(a.as_ref(), "test").unwrap();
        let x = c.solve_vec(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[(i, j)] * x[j]).sum();
            assert!((r - (i as f64 + 1.0)).abs() < 1e-12);
        }
        // det = (4-1)^2 (4+2) = 54
        assert!((c.logdet() - 54f64.ln()).abs() < 1e-12);
        let inv = c.inverse();
        let prod = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(matches!(
            Cholesky::new(a.as_ref(), "indefinite"),
            Err(GpError::NotPositiveDefinite { .. })
        ));
    }
}
