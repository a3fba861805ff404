//! Vecchia approximations Σ_V⁻¹ = BᵀD⁻¹B with nearest-neighbour
//! conditioning sets, and the iterative machinery for (Σ_V⁻¹ + W)-systems.

pub mod precond;
pub mod solve;

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{check_len, GpError, Result};
use crate::kernels::{CovParams, KdTree, KernelSpec, LocationSet};
use crate::linalg::{dot, Cholesky, DenseMatrix};
use crate::operator::LinearOperator;
use crate::random::{gaussian_vec, stream};

pub use precond::{fitc_precond_vecchia, obs_vecchia_precond, ObsVecchiaPrecond};
pub use solve::{
    solve_vecchia_system, vecchia_logdet_slq, vecchia_nll_gaussian, CovPlusWinv, NllMode, PrecisionPlusW,
    VecchiaLogdet, VecchiaNll, VecchiaPrecondKind, VecchiaSolvePath,
};

/// Relative jitter levels tried, in order, when a conditioning block is singular.
const JITTER_LADDER: [f64; 3] = [0.0, 1e-10, 1e-8];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecchiaOrdering {
    /// Points are conditioned in input order.
    Given,
    /// Uniformly random permutation drawn from the seed.
    Random(u64),
}

impl Default for VecchiaOrdering {
    fn default() -> Self {
        Self::Random(0)
    }
}

impl VecchiaOrdering {
    fn permutation(self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        let seed = match self {
            Self::Given => return perm,
            Self::Random(s) => s,
        };
        perm.shuffle(&mut stream(seed, 0));
        perm
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "given" => Ok(Self::Given),
            "random" => Ok(Self::default()),
            _ => s
                .strip_prefix("random:")
                .and_then(|t| t.parse().ok())
                .map(Self::Random)
                .ok_or_else(|| GpError::Config(format!("unknown Vecchia ordering '{s}' (given, random, random:<seed>)"))),
        }
    }
}

/// Unit lower-triangular B (in the conditioning order) and conditional
/// variances D. Row k of B holds 1 on the diagonal and −Aₖ on N(k).
#[derive(Clone, Debug)]
pub struct VecchiaModel {
    /// perm[k] is the input index of the k-th point in the ordering.
    perm: Vec<usize>,
    row_ptr: Vec<usize>,
    /// Neighbour positions in the ordering, all < the row position.
    nbr: Vec<usize>,
    /// Aₖ coefficients aligned with `nbr`.
    coef: Vec<f64>,
    d: Vec<f64>,
    m_v: usize,
}

/// Vecchia factorization of the covariance c(sᵢ, sⱼ) + δᵢⱼ·nuggetᵢ.
pub fn build_vecchia(
    locs: &LocationSet,
    params: &CovParams,
    kernel: &KernelSpec,
    m_v: usize,
    ordering: VecchiaOrdering,
) -> Result<VecchiaModel> {
    VecchiaModel::build(locs, params, kernel, m_v, ordering, None)
}

impl VecchiaModel {
    /// `nugget`, if given, is indexed like `locs` and added to the diagonal.
    pub fn build(
        locs: &LocationSet,
        params: &CovParams,
        kernel: &KernelSpec,
        m_v: usize,
        ordering: VecchiaOrdering,
        nugget: Option<&[f64]>,
    ) -> Result<Self> {
        params.validate()?;
        if m_v == 0 {
            return Err(GpError::Domain("Vecchia needs m_v >= 1 neighbours".into()));
        }
        let n = locs.len();
        if let Some(nu) = nugget {
            check_len("Vecchia nugget", n, nu.len())?;
            if nu.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(GpError::Domain("Vecchia nugget must be finite and nonnegative".into()));
            }
        }
        let perm = ordering.permutation(n);
        let mut rank = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            rank[i] = k;
        }
        let tree = KdTree::new(locs);
        let nug = |i: usize| nugget.map_or(0.0, |v| v[i]);
        let rows: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let i = perm[k];
                let mut nb: Vec<usize> = if k <= m_v {
                    (0..k).collect()
                } else {
                    tree.knn_filtered(locs.point(i), m_v, |j| rank[j] < k)
                        .into_iter()
                        .map(|j| rank[j])
                        .collect()
                };
                nb.sort_unstable();
                let (a, d) = conditional(locs, &perm, k, &nb, params, kernel, &nug)?;
                Ok((nb, a, d))
            })
            .collect::<Result<_>>()?;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut nbr = Vec::new();
        let mut coef = Vec::new();
        let mut d = Vec::with_capacity(n);
        for (nb, a, dk) in rows {
            nbr.extend(nb);
            coef.extend(a);
            row_ptr.push(nbr.len());
            d.push(dk);
        }
        Ok(Self {
            perm,
            row_ptr,
            nbr,
            coef,
            d,
            m_v,
        })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn m_v(&self) -> usize {
        self.m_v
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Conditional variances in the conditioning order.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Neighbour positions and Aₖ of the k-th point in the ordering.
    pub fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[k]..self.row_ptr[k + 1];
        (&self.nbr[r.clone()], &self.coef[r])
    }

    /// log det Σ_V = Σ log Dₖ.
    pub fn logdet_cov(&self) -> f64 {
        self.d.iter().map(|x| x.ln()).sum()
    }

    fn to_order(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&i| x[i]).collect()
    }

    fn from_order(&self, xo: &[f64], out: &mut [f64]) {
        for (&i, &v) in self.perm.iter().zip(xo) {
            out[i] = v;
        }
    }

    /// u ← B u
    fn b_mul(&self, u: &mut [f64]) {
        for k in (0..self.n()).rev() {
            let (nb, a) = self.row(k);
            let s: f64 = nb.iter().zip(a).map(|(&j, &c)| c * u[j]).sum();
            u[k] -= s;
        }
    }

    /// u ← Bᵀ u
    fn bt_mul(&self, u: &mut [f64]) {
        for k in 0..self.n() {
            let (nb, a) = self.row(k);
            let uk = u[k];
            for (&j, &c) in nb.iter().zip(a) {
                u[j] -= c * uk;
            }
        }
    }

    /// u ← B⁻¹ u (forward substitution).
    fn b_solve(&self, u: &mut [f64]) {
        for k in 0..self.n() {
            let (nb, a) = self.row(k);
            let s: f64 = nb.iter().zip(a).map(|(&j, &c)| c * u[j]).sum();
            u[k] += s;
        }
    }

    /// u ← B⁻ᵀ u (backward substitution).
    fn bt_solve(&self, u: &mut [f64]) {
        for k in (0..self.n()).rev() {
            let (nb, a) = self.row(k);
            let uk = u[k];
            for (&j, &c) in nb.iter().zip(a) {
                u[j] += c * uk;
            }
        }
    }

    /// `out ← Σ_V⁻¹ x = BᵀD⁻¹B x` in input indexing.
    pub fn precision_apply(&self, x: &[f64], out: &mut [f64]) {
        let mut u = self.to_order(x);
        self.b_mul(&mut u);
        u.iter_mut().zip(&self.d).for_each(|(ui, di)| *ui /= di);
        self.bt_mul(&mut u);
        self.from_order(&u, out);
    }

    /// `out ← Σ_V x = B⁻¹DB⁻ᵀ x` in input indexing.
    pub fn cov_apply(&self, x: &[f64], out: &mut [f64]) {
        let mut u = self.to_order(x);
        self.bt_solve(&mut u);
        u.iter_mut().zip(&self.d).for_each(|(ui, di)| *ui *= di);
        self.b_solve(&mut u);
        self.from_order(&u, out);
    }

    /// xᵀΣ_V⁻¹x = ‖D^{-1/2}Bx‖².
    pub fn precision_quad(&self, x: &[f64]) -> f64 {
        let mut u = self.to_order(x);
        self.b_mul(&mut u);
        u.iter().zip(&self.d).map(|(ui, di)| ui * ui / di).sum()
    }

    /// diag(Σ_V⁻¹) in input indexing.
    pub fn precision_diag(&self) -> Vec<f64> {
        let mut dg: Vec<f64> = self.d.iter().map(|x| 1.0 / x).collect();
        for k in 0..self.n() {
            let (nb, a) = self.row(k);
            for (&j, &c) in nb.iter().zip(a) {
                dg[j] += c * c / self.d[k];
            }
        }
        let mut out = vec![0.0; self.n()];
        self.from_order(&dg, &mut out);
        out
    }

    /// Draw b ~ N(0, Σ_V) as B⁻¹D^{1/2}ε.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut u = gaussian_vec(rng, self.n());
        u.iter_mut().zip(&self.d).for_each(|(ui, di)| *ui *= di.sqrt());
        self.b_solve(&mut u);
        let mut out = vec![0.0; self.n()];
        self.from_order(&u, &mut out);
        out
    }

    /// Dense Σ_V⁻¹ in input indexing; for oracles.
    pub fn precision_dense(&self) -> DenseMatrix {
        let n = self.n();
        let mut p = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.precision_apply(&e, &mut col);
            p.col_as_slice_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        p
    }
}

/// Aₖ and Dₖ for the k-th ordered point given neighbour positions `nb`.
fn conditional(
    locs: &LocationSet,
    perm: &[usize],
    k: usize,
    nb: &[usize],
    params: &CovParams,
    kernel: &KernelSpec,
    nug: &(dyn Fn(usize) -> f64 + Sync),
) -> Result<(Vec<f64>, f64)> {
    let i = perm[k];
    let idx: Vec<usize> = nb.iter().map(|&j| perm[j]).collect();
    let q = idx.len();
    let c_ii = params.sigma1_2 + nug(i);
    if q == 0 {
        return Ok((Vec::new(), c_ii));
    }
    let base = DenseMatrix::from_fn(q, q, |r, c| {
        let v = kernel.cov(params, locs.dist(idx[r], idx[c]));
        if r == c {
            v + nug(idx[r])
        } else {
            v
        }
    });
    let rhs: Vec<f64> = idx.iter().map(|&j| kernel.cov(params, locs.dist(j, i))).collect();
    for &eps in &JITTER_LADDER {
        let jit = eps * params.sigma1_2;
        let mut s = base.clone();
        for r in 0..q {
            s[(r, r)] += jit;
        }
        let Ok(ch) = Cholesky::new(s.as_ref(), "Vecchia conditioning set") else {
            continue;
        };
        let a = ch.solve_vec(&rhs);
        let d = c_ii + jit - dot(&a, &rhs);
        if d > 1e-12 * params.sigma1_2 && a.iter().all(|x| x.is_finite()) {
            return Ok((a, d));
        }
    }
    Err(GpError::NotPositiveDefinite {
        stage: format!("Vecchia conditioning set of point {i} is singular after jitter"),
    })
}

/// Positive diagonal W.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagW {
    w: Vec<f64>,
}

impl DiagW {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(GpError::Domain("W must have strictly positive finite entries".into()));
        }
        Ok(Self { w })
    }

    /// W = σ⁻²I for a Gaussian likelihood with noise variance σ².
    pub fn gaussian(n: usize, sigma2: f64) -> Result<Self> {
        Self::new(vec![1.0 / sigma2; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn inverse(&self) -> Vec<f64> {
        self.w.iter().map(|x| 1.0 / x).collect()
    }

    pub fn logdet(&self) -> f64 {
        self.w.iter().map(|x| x.ln()).sum()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Σ_V viewed as an operator.
pub struct VecchiaCov<'a>(pub &'a VecchiaModel);

impl LinearOperator for VecchiaCov<'_> {
    fn dim(&self) -> usize {
        self.0.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.cov_apply(x, out)
    }
}
