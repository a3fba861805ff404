use rand::RngCore;

use super::Preconditioner;
use crate::error::{GpError, Result};
use crate::fsa::FsaModel;
use crate::linalg::{dot, mat_t_vec, mat_vec, Cholesky, DenseMatrix};
use crate::random::gaussian_vec;

/// Residual diagonal entries below `-NEG_TOL·max(diag)` are treated as a loss
/// of positive semidefiniteness rather than roundoff.
const NEG_TOL: f64 = 1e-8;

/// Partial pivoted Cholesky factor A ≈ LLᵀ.
#[derive(Clone, Debug)]
pub struct PivCholFactor {
    /// n×k, column j is the j-th Cholesky column.
    pub l: DenseMatrix,
    pub pivots: Vec<usize>,
    /// Tr(A − LLᵀ), which bounds ‖A − LLᵀ‖_F for PSD A.
    pub residual_trace: f64,
}

/// Greedy pivoted Cholesky of a PSD matrix given its diagonal and column
/// oracle. Stops after `k` columns or once the largest residual diagonal
/// entry is ≤ `stop_tol`.
pub fn piv_chol_factor<F>(diag: &[f64], column: F, k: usize, stop_tol: f64) -> Result<PivCholFactor>
where
    F: Fn(usize) -> Vec<f64>,
{
    let n = diag.len();
    if k > n {
        return Err(GpError::Domain(format!("pivoted Cholesky rank {k} exceeds n = {n}")));
    }
    let scale = diag.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut res = diag.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let (p, &dmax) = res
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("n > 0 when k > 0");
        if dmax <= stop_tol {
            break;
        }
        let mut c = column(p);
        if c.len() != n {
            return Err(GpError::Dimension {
                what: "pivoted Cholesky column".into(),
                expected: n,
                got: c.len(),
            });
        }
        for prev in &cols {
            let f = prev[p];
            c.iter_mut().zip(prev).for_each(|(ci, li)| *ci -= f * li);
        }
        let s = 1.0 / dmax.sqrt();
        c.iter_mut().for_each(|x| *x *= s);
        // exact zero at chosen pivots keeps later columns from reselecting them
        for &q in &pivots {
            c[q] = 0.0;
        }
        for (i, (ri, ci)) in res.iter_mut().zip(&c).enumerate() {
            *ri -= ci * ci;
            if *ri < -NEG_TOL * scale {
                return Err(GpError::Numerical(format!(
                    "pivoted Cholesky residual {ri} at index {i} is negative"
                )));
            }
        }
        res[p] = 0.0;
        pivots.push(p);
        cols.push(c);
    }
    let mut l = DenseMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        l.col_as_slice_mut(j).copy_from_slice(c);
    }
    let residual_trace = res.iter().map(|r| r.max(0.0)).sum();
    Ok(PivCholFactor { l, pivots, residual_trace })
}

/// P = σ²I + LLᵀ with L a partial pivoted Cholesky factor of Σ̃† − σ²I.
#[derive(Clone, Debug)]
pub struct PivCholPrecond {
    factor: PivCholFactor,
    /// L stored transposed (k×n) so products reuse the column-major helpers.
    lt: DenseMatrix,
    sigma2: f64,
    l_core: Cholesky,
}

/// Factor `diag`/`column` (the non-nugget part) to rank ≤ `k` and fold in the nugget.
pub fn build_piv_chol<F>(
    diag: &[f64],
    column: F,
    k: usize,
    nugget: f64,
    stop_tol: f64,
) -> Result<PivCholPrecond>
where
    F: Fn(usize) -> Vec<f64>,
{
    if !(nugget > 0.0) {
        return Err(GpError::Domain("pivoted Cholesky preconditioner needs a positive nugget".into()));
    }
    let factor = piv_chol_factor(diag, column, k, stop_tol)?;
    PivCholPrecond::from_factor(factor, nugget)
}

impl PivCholPrecond {
    pub fn from_factor(factor: PivCholFactor, sigma2: f64) -> Result<Self> {
        let lt = factor.l.transpose().to_owned();
        let r = lt.nrows();
        let mut core = &lt * &factor.l;
        for j in 0..r {
            for i in 0..r {
                core[(i, j)] /= sigma2;
            }
            core[(j, j)] += 1.0;
        }
        let l_core = Cholesky::new(core.as_ref(), "pivoted Cholesky Woodbury core")?;
        Ok(Self {
            factor,
            lt,
            sigma2,
            l_core,
        })
    }

    /// Pivot on Σ̃† − σ²I = Σ̃_s − σ²I + VᵀV.
    pub fn for_model(model: &FsaModel, k: usize) -> Result<Self> {
        let sigma2 = model.params.sigma2;
        let v = model.v();
        let s = model.sigma_s();
        let diag: Vec<f64> = model
            .sparse_diag()
            .iter()
            .enumerate()
            .map(|(i, d)| d - sigma2 + dot(v.col_as_slice(i), v.col_as_slice(i)))
            .collect();
        let column = |j: usize| {
            let mut c = vec![0.0; model.n()];
            mat_t_vec(v, v.col_as_slice(j), &mut c);
            let (idx, vals) = s.row(j);
            for (&i, &x) in idx.iter().zip(vals) {
                c[i] += x;
            }
            c[j] -= sigma2;
            c
        };
        build_piv_chol(&diag, column, k.min(model.n()), sigma2, 1e-12 * model.params.sigma1_2)
    }

    pub fn factor(&self) -> &PivCholFactor {
        &self.factor
    }

    pub fn rank(&self) -> usize {
        self.lt.nrows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut p = &self.factor.l * &self.lt;
        for i in 0..p.nrows() {
            p[(i, i)] += self.sigma2;
        }
        p
    }
}

impl Preconditioner for PivCholPrecond {
    fn dim(&self) -> usize {
        self.lt.ncols()
    }

    fn solve(&self, r: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.rank()];
        mat_vec(&self.lt, r, &mut t);
        let u = self.l_core.solve_vec(&t);
        mat_t_vec(&self.lt, &u, out);
        let s2 = self.sigma2 * self.sigma2;
        for (o, ri) in out.iter_mut().zip(r) {
            *o = ri / self.sigma2 - *o / s2;
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.rank()];
        mat_vec(&self.lt, x, &mut t);
        mat_t_vec(&self.lt, &t, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.sigma2 * xi;
        }
    }

    fn logdet(&self) -> f64 {
        self.dim() as f64 * self.sigma2.ln() + self.l_core.logdet()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let e1 = gaussian_vec(rng, self.rank());
        let e2 = gaussian_vec(rng, self.dim());
        let mut z = vec![0.0; self.dim()];
        mat_t_vec(&self.lt, &e1, &mut z);
        let s = self.sigma2.sqrt();
        z.iter_mut().zip(&e2).for_each(|(zi, ei)| *zi += s * ei);
        z
    }

    fn name(&self) -> &'static str {
        "pivoted-cholesky"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::model::tests::instance;
    use crate::kernels::Param;

    fn dense_oracle(a: &DenseMatrix) -> (Vec<f64>, impl Fn(usize) -> Vec<f64> + '_) {
        let diag = (0..a.nrows()).map(|i| a[(i, i)]).collect();
        (diag, move |j: usize| a.col_as_slice(j).to_vec())
    }

    #[test]
    fn greedy_rule_picks_largest_diagonal() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| if i == j { [3.0, 1.0][i] } else { 0.0 });
        let (d, c) = dense_oracle(&a);
        let f = piv_chol_factor(&d, c, 1, 0.0).unwrap();
        assert_eq!(f.pivots, vec![0]);
        assert!((f.residual_trace - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_rank_is_exact_and_partial_rank_is_bounded() {
        let model = instance(200, 15, 0.1, 3);
        let mut a = model.to_dense();
        for i in 0..200 {
            a[(i, i)] -= model.params.sigma2;
        }
        let (d, c) = dense_oracle(&a);
        let full = piv_chol_factor(&d, &c, 200, 0.0).unwrap();
        assert!(full.residual_trace <= 1e-8);
        let part = piv_chol_factor(&d, &c, 50, 0.0).unwrap();
        let diff = &a - &part.l * part.l.transpose();
        assert!(diff.norm_l2() <= part.residual_trace * (1.0 + 1e-10));
        assert!(part.residual_trace < full.residual_trace + d.iter().sum::<f64>());
        // residual trace is nonincreasing in the rank
        let mut prev = f64::INFINITY;
        for k in [1, 5, 20, 50] {
            let t = piv_chol_factor(&d, &c, k, 0.0).unwrap().residual_trace;
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn rejects_indefinite_input() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        let (d, c) = dense_oracle(&a);
        assert!(matches!(piv_chol_factor(&d, c, 2, 0.0), Err(GpError::Numerical(_))));
    }

    #[test]
    fn model_preconditioner_matches_dense() {
        let model = instance(150, 10, 0.1, 9);
        let p = PivCholPrecond::for_model(&model, 40).unwrap();
        let dense = p.to_dense();
        let ch = Cholesky::new(dense.as_ref(), "oracle").unwrap();
        assert!((p.logdet() - ch.logdet()).abs() < 1e-8);
        let b: Vec<f64> = (0..150).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut pb = vec![0.0; 150];
        p.apply(&b, &mut pb);
        for (x, y) in p.solve_vec(&pb).iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(p.grad_logdet_trace(Param::Rho).is_err());
    }
}
