use rand::RngCore;

use super::{DiagW, VecchiaModel, VecchiaOrdering};
use crate::error::{check_len, Result};
use crate::fsa::SIGMA_M_JITTER;
use crate::inducing::InducingSet;
use crate::kernels::{cross_cov, CovParams, KernelSpec, LocationSet};
use crate::linalg::{dot, Cholesky};
use crate::precond::{FitcPrecond, Preconditioner};

/// P̂ = VᵀV + D_s with V = L_m⁻¹Σ_mn and D_s = diag(Σ − VᵀV) + W⁻¹, a
/// preconditioner for Σ_V + W⁻¹.
pub fn fitc_precond_vecchia(
    locs: &LocationSet,
    inducing: &InducingSet,
    params: &CovParams,
    kernel: &KernelSpec,
    w: &DiagW,
) -> Result<FitcPrecond> {
    params.validate()?;
    check_len("W diagonal", locs.len(), w.len())?;
    let m = inducing.len();
    let mut sigma_m = cross_cov(&inducing.locs, &inducing.locs, kernel, params)?;
    for i in 0..m {
        sigma_m[(i, i)] += SIGMA_M_JITTER * params.sigma1_2;
    }
    let chol = Cholesky::new(sigma_m.as_ref(), "inducing covariance")?;
    let mut v = cross_cov(&inducing.locs, locs, kernel, params)?;
    chol.solve_lower_in_place(v.as_mut());
    let d = w
        .inverse()
        .iter()
        .enumerate()
        .map(|(i, winv)| {
            let c = v.col_as_slice(i);
            (params.sigma1_2 - dot(c, c)).max(0.0) + winv
        })
        .collect();
    FitcPrecond::new(v, d)
}

/// P = (B̂ᵀD̂⁻¹B̂)⁻¹, a Vecchia approximation of Σ + W⁻¹ with W⁻¹ acting as
/// a pseudo nugget. Applying P⁻¹ is a sparse product; no inner iterations.
#[derive(Clone, Debug)]
pub struct ObsVecchiaPrecond {
    model: VecchiaModel,
}

pub fn obs_vecchia_precond(
    locs: &LocationSet,
    params: &CovParams,
    kernel: &KernelSpec,
    w: &DiagW,
    m_v: usize,
    ordering: VecchiaOrdering,
) -> Result<ObsVecchiaPrecond> {
    check_len("W diagonal", locs.len(), w.len())?;
    let model = VecchiaModel::build(locs, params, kernel, m_v, ordering, Some(&w.inverse()))?;
    Ok(ObsVecchiaPrecond { model })
}

impl ObsVecchiaPrecond {
    pub fn model(&self) -> &VecchiaModel {
        &self.model
    }
}

impl Preconditioner for ObsVecchiaPrecond {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn solve(&self, r: &[f64], out: &mut [f64]) {
        self.model.precision_apply(r, out)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.model.cov_apply(x, out)
    }

    fn logdet(&self) -> f64 {
        self.model.logdet_cov()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.model.sample(rng)
    }

    fn name(&self) -> &'static str {
        "vecchia"
    }
}
