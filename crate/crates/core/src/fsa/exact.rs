use faer::MatMut;

use super::derivs::{FsaDerivatives, LowRankDeriv};
use super::model::FsaModel;
use crate::error::{check_len, GpError, Result};
use crate::kernels::Param;
use crate::linalg::{dot, Cholesky, DenseMatrix};
use crate::operator::{LinearOperator, LinearSolver};

/// Largest n for which the dense exact path is attempted.
pub const DEFAULT_EXACT_LIMIT: usize = 20_000;

/// Cholesky/Woodbury factorization of Σ̃†.
///
/// With L_s the factor of Σ̃_s and G = L_s⁻¹Vᵀ, the whitened core
/// M̃ = I + GᵀG equals L_m⁻¹ M L_m⁻ᵀ for M = Σ_m + Σ_mn Σ̃_s⁻¹ Σ_mnᵀ, so
/// log det M − log det Σ_m = log det M̃.
pub struct ExactFsa<'a> {
    model: &'a FsaModel,
    l_s: Cholesky,
    g: DenseMatrix,
    l_core: Cholesky,
}

impl<'a> ExactFsa<'a> {
    pub fn new(model: &'a FsaModel) -> Result<Self> {
        Self::with_limit(model, DEFAULT_EXACT_LIMIT)
    }

    pub fn with_limit(model: &'a FsaModel, limit: usize) -> Result<Self> {
        let n = model.n();
        if n > limit {
            return Err(GpError::TooLarge { n, limit });
        }
        let l_s = Cholesky::new(model.sigma_s().to_dense().as_ref(), "tapered residual")?;
        let mut g = model.v().transpose().to_owned();
        l_s.solve_lower_in_place(g.as_mut());
        let mut core = g.transpose() * &g;
        for i in 0..model.m() {
            core[(i, i)] += 1.0;
        }
        let l_core = Cholesky::new(core.as_ref(), "Woodbury core")?;
        Ok(Self {
            model,
            l_s,
            g,
            l_core,
        })
    }

    pub fn model(&self) -> &FsaModel {
        self.model
    }

    pub fn l_s(&self) -> &Cholesky {
        &self.l_s
    }

    /// G = L_s⁻¹Vᵀ (n×m).
    pub fn g(&self) -> &DenseMatrix {
        &self.g
    }

    /// Factor of the whitened core M̃ = I + GᵀG.
    pub fn l_core(&self) -> &Cholesky {
        &self.l_core
    }

    /// (log det M, log det Σ_m, log det Σ̃_s).
    pub fn logdet_parts(&self) -> (f64, f64, f64) {
        let ld_m = self.model.chol_m().logdet();
        (self.l_core.logdet() + ld_m, ld_m, self.l_s.logdet())
    }

    /// log det Σ̃† = log det M − log det Σ_m + log det Σ̃_s.
    pub fn logdet(&self) -> f64 {
        self.l_core.logdet() + self.l_s.logdet()
    }

    /// Σ̃†⁻¹ B for an n×r block, in place.
    pub fn solve_in_place(&self, mut b: MatMut<'_, f64>) {
        self.l_s.solve_lower_in_place(b.as_mut());
        let mut s = self.g.transpose() * b.as_ref();
        self.l_core.solve_in_place(s.as_mut());
        let corr = &self.g * &s;
        let mut b = b;
        b -= &corr;
        self.l_s.solve_upper_in_place(b);
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("Woodbury solve right-hand side", self.model.n(), b.len())?;
        let mut x = b.to_vec();
        self.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
        Ok(x)
    }

    pub fn solve_mat(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("Woodbury solve rows", self.model.n(), b.nrows())?;
        let mut x = b.clone();
        self.solve_in_place(x.as_mut());
        Ok(x)
    }

    /// H = L_M̃⁻¹ V Σ̃_s⁻¹ (m×n), so that Σ̃†⁻¹ = Σ̃_s⁻¹ − HᵀH.
    pub fn h(&self) -> DenseMatrix {
        let mut ht = self.g.clone();
        self.l_s.solve_upper_in_place(ht.as_mut());
        let mut h = ht.transpose().to_owned();
        self.l_core.solve_lower_in_place(h.as_mut());
        h
    }

    /// Dense Σ̃†⁻¹.
    pub fn inverse_dense(&self) -> DenseMatrix {
        let h = self.h();
        let mut inv = self.l_s.inverse();
        inv -= h.transpose() * &h;
        inv
    }

    pub fn nll(&self, y: &[f64], x: &DenseMatrix) -> Result<f64> {
        let r = residual(y, x, &self.model.params.beta)?;
        let u = self.solve_vec(&r)?;
        let n = self.model.n() as f64;
        Ok(0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * self.logdet() + 0.5 * dot(&r, &u))
    }

    /// Gradient of the negative log-likelihood over (σ², σ₁², ρ) at fixed β.
    pub fn grad(&self, y: &[f64], x: &DenseMatrix) -> Result<[f64; 3]> {
        let r = residual(y, x, &self.model.params.beta)?;
        let u = self.solve_vec(&r)?;
        let derivs = FsaDerivatives::new(self.model);
        let traces = self.exact_traces(&derivs);
        let mut g = [0.0; 3];
        let mut du = vec![0.0; self.model.n()];
        for p in Param::ALL {
            derivs.apply(p, &u, &mut du);
            g[p.index()] = 0.5 * traces[p.index()] - 0.5 * dot(&u, &du);
        }
        Ok(g)
    }

    /// Tr(Σ̃†⁻¹ ∂Σ̃†/∂θ) for every parameter.
    pub fn exact_traces(&self, derivs: &FsaDerivatives<'_>) -> [f64; 3] {
        let inv = self.inverse_dense();
        let model = self.model;
        let mut out = [0.0; 3];
        let mut z: Option<DenseMatrix> = None;
        let mut vinv: Option<DenseMatrix> = None;
        for p in Param::ALL {
            let d = derivs.get(p);
            let mut t = 0.0;
            for i in 0..model.n() {
                let (cols, vals) = d.sparse.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    t += inv[(i, j)] * v;
                }
            }
            t += match &d.low {
                LowRankDeriv::Zero => 0.0,
                LowRankDeriv::Scaled(s) => {
                    let vi = vinv.get_or_insert_with(|| model.v() * &inv);
                    s * frob_inner(vi, model.v())
                }
                LowRankDeriv::General { dk, dsm } => {
                    let zz = z.get_or_insert_with(|| derivs.w() * &inv);
                    let zw = &*zz * derivs.w().transpose();
                    2.0 * frob_inner(zz, dk) - frob_inner(&zw, dsm)
                }
            };
            out[p.index()] = t;
        }
        out
    }
}

impl LinearSolver for ExactFsa<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_vec(b)
    }
}

impl LinearOperator for ExactFsa<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    /// Applies the forward operator Σ̃†.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.model.apply(x, out)
    }
}

fn frob_inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (0..a.ncols()).map(|j| dot(a.col_as_slice(j), b.col_as_slice(j))).sum()
}

/// y − Xβ (β may be empty only when X has no columns).
pub fn residual(y: &[f64], x: &DenseMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    check_len("covariate rows", y.len(), x.nrows())?;
    check_len("regression coefficients", x.ncols(), beta.len())?;
    let mut r = y.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        for (ri, xi) in r.iter_mut().zip(x.col_as_slice(j)) {
            *ri -= b * xi;
        }
    }
    Ok(r)
}

/// Negative log-likelihood on the exact path.
pub fn nll_exact(model: &FsaModel, y: &[f64], x: &DenseMatrix) -> Result<f64> {
    ExactFsa::new(model)?.nll(y, x)
}

pub fn grad_exact(model: &FsaModel, y: &[f64], x: &DenseMatrix) -> Result<[f64; 3]> {
    ExactFsa::new(model)?.grad(y, x)
}

pub fn solve_woodbury(model: &FsaModel, b: &[f64]) -> Result<Vec<f64>> {
    ExactFsa::new(model)?.solve_vec(b)
}

pub fn logdet_sylvester(model: &FsaModel) -> Result<f64> {
    Ok(ExactFsa::new(model)?.logdet())
}
