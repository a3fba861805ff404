use rayon::prelude::*;

use crate::error::{check_len, GpError, Result};
use crate::inducing::InducingSet;
use crate::kernels::{cross_cov, taper_pattern, CovParams, KernelSpec, LocationSet, SparseSym, TaperSpec};
use crate::linalg::{dot, mat_t_vec, mat_vec, Cholesky, DenseMatrix};
use crate::operator::LinearOperator;

/// Relative jitter added to the diagonal of Σ_m.
pub const SIGMA_M_JITTER: f64 = 1e-10;

/// Assembled full-scale approximation Σ̃† = VᵀV + Σ̃_s with V = L_m⁻¹Σ_mn.
#[derive(Clone, Debug)]
pub struct FsaModel {
    pub locs: LocationSet,
    pub inducing: InducingSet,
    pub params: CovParams,
    pub kernel: KernelSpec,
    pub taper: TaperSpec,
    sigma_m: DenseMatrix,
    chol_m: Cholesky,
    sigma_mn: DenseMatrix,
    v: DenseMatrix,
    pattern: SparseSym,
    sigma_s: SparseSym,
    clamped: Vec<bool>,
}

impl FsaModel {
    pub fn assemble(
        locs: &LocationSet,
        inducing: &InducingSet,
        params: &CovParams,
        kernel: &KernelSpec,
        taper: &TaperSpec,
    ) -> Result<Self> {
        let pattern = taper_pattern(locs, taper.gamma)?;
        Self::assemble_on_pattern(locs, inducing, params, kernel, taper, pattern)
    }

    /// Assemble with a precomputed distance pattern (from `taper_pattern` at `taper.gamma`).
    pub fn assemble_on_pattern(
        locs: &LocationSet,
        inducing: &InducingSet,
        params: &CovParams,
        kernel: &KernelSpec,
        taper: &TaperSpec,
        pattern: SparseSym,
    ) -> Result<Self> {
        params.validate()?;
        check_len("taper pattern size", locs.len(), pattern.dim())?;
        check_len("inducing point dimension", locs.dim(), inducing.locs.dim())?;
        let m = inducing.len();
        if m == 0 || m > locs.len() {
            return Err(GpError::Domain(format!(
                "need 1 <= m <= n inducing points, got m = {m}, n = {}",
                locs.len()
            )));
        }
        let mut sigma_m = cross_cov(&inducing.locs, &inducing.locs, kernel, params)?;
        for i in 0..m {
            sigma_m[(i, i)] += SIGMA_M_JITTER * params.sigma1_2;
        }
        let chol_m = Cholesky::new(sigma_m.as_ref(), "inducing covariance")?;
        let sigma_mn = cross_cov(&inducing.locs, locs, kernel, params)?;
        let mut v = sigma_mn.clone();
        chol_m.solve_lower_in_place(v.as_mut());

        let lr_diag: Vec<f64> = (0..locs.len())
            .into_par_iter()
            .map(|i| {
                let c = v.col_as_slice(i);
                dot(c, c)
            })
            .collect();
        let clamped: Vec<bool> = lr_diag.iter().map(|&q| params.sigma1_2 - q <= 0.0).collect();
        let sigma_s = pattern.map_values(|i, j, dist| {
            if i == j {
                (params.sigma1_2 - lr_diag[i]).max(0.0) + params.sigma2
            } else {
                let low = dot(v.col_as_slice(i), v.col_as_slice(j));
                (kernel.cov(params, dist) - low) * taper.value(dist)
            }
        });
        Ok(Self {
            locs: locs.clone(),
            inducing: inducing.clone(),
            params: params.clone(),
            kernel: *kernel,
            taper: *taper,
            sigma_m,
            chol_m,
            sigma_mn,
            v,
            pattern,
            sigma_s,
            clamped,
        })
    }

    /// Same locations, inducing points and taper at new parameters.
    pub fn reparameterize(&self, params: &CovParams) -> Result<Self> {
        Self::assemble_on_pattern(
            &self.locs,
            &self.inducing,
            params,
            &self.kernel,
            &self.taper,
            self.pattern.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.locs.len()
    }

    pub fn m(&self) -> usize {
        self.inducing.len()
    }

    /// Σ_m including jitter.
    pub fn sigma_m(&self) -> &DenseMatrix {
        &self.sigma_m
    }

    pub fn chol_m(&self) -> &Cholesky {
        &self.chol_m
    }

    pub fn sigma_mn(&self) -> &DenseMatrix {
        &self.sigma_mn
    }

    /// V = L_m⁻¹Σ_mn (m×n); the low-rank part is VᵀV.
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    /// W = Σ_m⁻¹Σ_mn = L_m⁻ᵀV.
    pub fn w(&self) -> DenseMatrix {
        let mut w = self.v.clone();
        self.chol_m.solve_upper_in_place(w.as_mut());
        w
    }

    /// Taper pattern with pairwise distances as values.
    pub fn pattern(&self) -> &SparseSym {
        &self.pattern
    }

    /// Σ̃_s = (Σ − Σ_l)∘T(γ) + σ²I.
    pub fn sigma_s(&self) -> &SparseSym {
        &self.sigma_s
    }

    /// Rows where the residual variance σ₁² − ‖Vᵢ‖² was clamped to zero.
    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    /// diag(Σ̃_s), the FITC diagonal D_s.
    pub fn sparse_diag(&self) -> Vec<f64> {
        self.sigma_s.diag()
    }

    /// Average stored entries per row of Σ̃_s.
    pub fn n_gamma(&self) -> f64 {
        self.sigma_s.avg_row_nnz()
    }

    /// `out ← VᵀV x`
    pub fn low_rank_apply(&self, x: &[f64], out: &mut [f64]) {
        let mut t = vec![0.0; self.m()];
        mat_vec(&self.v, x, &mut t);
        mat_t_vec(&self.v, &t, out);
    }

    /// Dense Σ̃†, for oracles at small n.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = self.v.transpose() * &self.v;
        for i in 0..self.n() {
            let (cols, vals) = self.sigma_s.row(i);
            for (&j, &x) in cols.iter().zip(vals) {
                a[(i, j)] += x;
            }
        }
        a
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("FSA matvec input", self.n(), x.len())?;
        Ok(self.apply_vec(x))
    }
}

impl LinearOperator for FsaModel {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.sigma_s.matvec(x, out);
        let mut lr = vec![0.0; self.n()];
        self.low_rank_apply(x, &mut lr);
        for (o, l) in out.iter_mut().zip(&lr) {
            *o += l;
        }
    }
}

/// Σ̃_s alone as an operator.
pub struct SparsePart<'a>(pub &'a FsaModel);

impl LinearOperator for SparsePart<'_> {
    fn dim(&self) -> usize {
        self.0.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.sigma_s.matvec(x, out);
    }
}
