use super::precond::{fitc_precond_vecchia, obs_vecchia_precond};
use super::{DiagW, VecchiaModel, VecchiaOrdering};
use crate::error::{check_len, GpError, Result};
use crate::inducing::InducingSet;
use crate::kernels::{CovParams, KernelSpec, LocationSet};
use crate::krylov::{pcg_solve, slq_logdet, CgConfig, SlqOutput, SolveReport};
use crate::linalg::{mat_vec, DenseMatrix};
use crate::operator::LinearOperator;
use crate::precond::{DiagPrecond, Preconditioner};

/// Σ_V⁻¹ + W as an operator (sparse apply).
pub struct PrecisionPlusW<'a> {
    pub model: &'a VecchiaModel,
    pub w: &'a DiagW,
}

impl LinearOperator for PrecisionPlusW<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.model.precision_apply(x, out);
        for ((o, xi), wi) in out.iter_mut().zip(x).zip(self.w.values()) {
            *o += wi * xi;
        }
    }
}

/// Σ_V + W⁻¹ as an operator; Σ_V is applied with two triangular solves.
pub struct CovPlusWinv<'a> {
    pub model: &'a VecchiaModel,
    pub w: &'a DiagW,
}

impl LinearOperator for CovPlusWinv<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.model.cov_apply(x, out);
        for ((o, xi), wi) in out.iter_mut().zip(x).zip(self.w.values()) {
            *o += xi / wi;
        }
    }
}

/// How (Σ_V⁻¹ + W)⁻¹v is computed.
pub enum VecchiaSolvePath<'a> {
    /// CG directly on Σ_V⁻¹ + W with a Jacobi preconditioner.
    Precision,
    /// Using Σ_V⁻¹ + W = W(Σ_V + W⁻¹)Σ_V⁻¹: x = Σ_V (Σ_V + W⁻¹)⁻¹ W⁻¹v, the
    /// middle solve by PCG with the given preconditioner for Σ_V + W⁻¹.
    Covariance(&'a dyn Preconditioner),
}

/// x = (Σ_V⁻¹ + W)⁻¹v; fails if CG does not reach `cfg.tol`.
pub fn solve_vecchia_system(
    model: &VecchiaModel,
    w: &DiagW,
    v: &[f64],
    path: VecchiaSolvePath<'_>,
    cfg: &CgConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = model.n();
    check_len("W diagonal", n, w.len())?;
    check_len("right-hand side", n, v.len())?;
    match path {
        VecchiaSolvePath::Precision => {
            let dg: Vec<f64> = model.precision_diag().iter().zip(w.values()).map(|(a, b)| a + b).collect();
            let p = DiagPrecond::new(dg)?;
            let out = pcg_solve(&PrecisionPlusW { model, w }, &p, v, cfg)?;
            out.report.require_converged()?;
            Ok((out.x, out.report))
        }
        VecchiaSolvePath::Covariance(p) => {
            let rhs: Vec<f64> = v.iter().zip(w.values()).map(|(a, b)| a / b).collect();
            let out = pcg_solve(&CovPlusWinv { model, w }, p, &rhs, cfg)?;
            out.report.require_converged()?;
            let mut x = vec![0.0; n];
            model.cov_apply(&out.x, &mut x);
            Ok((x, out.report))
        }
    }
}

#[derive(Clone, Debug)]
pub struct VecchiaLogdet {
    /// Estimate of log det(Σ_V⁻¹ + W).
    pub logdet: f64,
    /// SLQ run on Σ_V + W⁻¹.
    pub slq: SlqOutput,
}

impl VecchiaLogdet {
    /// Monte-Carlo standard error of `logdet`.
    pub fn std_error(&self) -> f64 {
        sample_se(&self.slq.per_probe)
    }
}

pub(crate) fn sample_se(x: &[f64]) -> f64 {
    let l = x.len() as f64;
    if l < 2.0 {
        return f64::NAN;
    }
    let mean = x.iter().sum::<f64>() / l;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (l - 1.0) / l).sqrt()
}

/// log det(Σ_V⁻¹ + W) = log det(Σ_V + W⁻¹) + log det W − Σ log Dₖ, the first
/// term by SLQ with preconditioner `p` for Σ_V + W⁻¹.
pub fn vecchia_logdet_slq(
    model: &VecchiaModel,
    w: &DiagW,
    p: &dyn Preconditioner,
    cfg: &CgConfig,
) -> Result<VecchiaLogdet> {
    check_len("W diagonal", model.n(), w.len())?;
    let slq = slq_logdet(&CovPlusWinv { model, w }, p, cfg)?;
    Ok(VecchiaLogdet {
        logdet: slq.logdet + w.logdet() - model.logdet_cov(),
        slq,
    })
}

/// Preconditioner family for the latent model's Σ_V + σ²I.
#[derive(Clone, Copy, Debug)]
pub enum VecchiaPrecondKind<'a> {
    Fitc(&'a InducingSet),
    /// Observable Vecchia with `m_v` neighbours, same ordering as the model.
    ObsVecchia { m_v: usize },
}

impl VecchiaPrecondKind<'_> {
    pub fn build(
        &self,
        locs: &LocationSet,
        params: &CovParams,
        kernel: &KernelSpec,
        w: &DiagW,
        ordering: VecchiaOrdering,
    ) -> Result<Box<dyn Preconditioner>> {
        Ok(match *self {
            Self::Fitc(ind) => Box::new(fitc_precond_vecchia(locs, ind, params, kernel, w)?),
            Self::ObsVecchia { m_v } => Box::new(obs_vecchia_precond(locs, params, kernel, w, m_v, ordering)?),
        })
    }
}

pub enum NllMode<'a> {
    /// Vecchia on the latent process, Y = b + ε; log det by SLQ, quadratic
    /// form by PCG, both on Σ_V + σ²I.
    LatentIterative {
        precond: VecchiaPrecondKind<'a>,
        cfg: CgConfig,
    },
    /// Vecchia on Σ + σ²I; closed form.
    ObservableDirect,
}

#[derive(Clone, Debug)]
pub struct VecchiaNll {
    pub nll: f64,
    /// log det of the marginal covariance of y.
    pub logdet: f64,
    /// rᵀ(marginal covariance)⁻¹r with r = y − Xβ.
    pub quad: f64,
    /// Standard error of the log-determinant estimate; 0 when exact.
    pub logdet_se: f64,
}

/// Gaussian negative log-likelihood under a Vecchia approximation with
/// `m_v` neighbours. β is taken from `params.beta` (ignored without `x`).
#[allow(clippy::too_many_arguments)]
pub fn vecchia_nll_gaussian(
    locs: &LocationSet,
    y: &[f64],
    x: Option<&DenseMatrix>,
    params: &CovParams,
    kernel: &KernelSpec,
    m_v: usize,
    ordering: VecchiaOrdering,
    mode: &NllMode<'_>,
) -> Result<VecchiaNll> {
    let n = locs.len();
    check_len("response", n, y.len())?;
    let mut r = y.to_vec();
    if let Some(x) = x {
        check_len("design rows", n, x.nrows())?;
        check_len("regression coefficients", x.ncols(), params.beta.len())?;
        let mut xb = vec![0.0; n];
        mat_vec(x, &params.beta, &mut xb);
        r.iter_mut().zip(&xb).for_each(|(ri, b)| *ri -= b);
    }
    let (logdet, quad, logdet_se) = match mode {
        NllMode::ObservableDirect => {
            let nug = vec![params.sigma2; n];
            let v = VecchiaModel::build(locs, params, kernel, m_v, ordering, Some(&nug))?;
            (v.logdet_cov(), v.precision_quad(&r), 0.0)
        }
        NllMode::LatentIterative { precond, cfg } => {
            let v = VecchiaModel::build(locs, params, kernel, m_v, ordering, None)?;
            let w = DiagW::gaussian(n, params.sigma2)?;
            let p = precond.build(locs, params, kernel, &w, ordering)?;
            let ld = vecchia_logdet_slq(&v, &w, p.as_ref(), cfg)?;
            if !ld.slq.all_converged() {
                return Err(GpError::NotConverged {
                    iterations: cfg.max_iter,
                    residual: ld.slq.reports.iter().map(|r| r.residual).fold(0.0, f64::max),
                });
            }
            // log det(Σ_V + W⁻¹) recovered from the (Σ_V⁻¹ + W) estimate
            let logdet = ld.logdet - w.logdet() + v.logdet_cov();
            let sol = pcg_solve(&CovPlusWinv { model: &v, w: &w }, p.as_ref(), &r, cfg)?;
            sol.report.require_converged()?;
            let quad = crate::linalg::dot(&r, &sol.x);
            (logdet, quad, ld.std_error())
        }
    };
    let nll = 0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    if !nll.is_finite() {
        return Err(GpError::Numerical(format!("Vecchia NLL is not finite ({nll})")));
    }
    Ok(VecchiaNll {
        nll,
        logdet,
        quad,
        logdet_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inducing::select_random;
    use crate::kernels::cross_cov;
    use crate::linalg::{dot, norm2, Cholesky};
    use crate::vecchia::tests::setup;
    use crate::vecchia::build_vecchia;

    fn cfg(tol: f64) -> CgConfig {
        CgConfig {
            tol,
            max_iter: 2000,
            ..CgConfig::default()
        }
    }

    fn synthetic_w(n: usize) -> DiagW {
        DiagW::new((0..n).map(|i| 0.5 + 3.0 * ((i * 37 % 11) as f64 / 11.0)).collect()).unwrap()
    }

    /// Dense (Σ_V⁻¹ + W) for oracles.
    fn dense_system(v: &VecchiaModel, w: &DiagW) -> DenseMatrix {
        let mut a = v.precision_dense();
        for (i, wi) in w.values().iter().enumerate() {
            a[(i, i)] += wi;
        }
        a
    }

    #[test]
    fn dominant_w_gives_v_over_w() {
        let (locs, p, k) = setup(100, 1);
        let v = build_vecchia(&locs, &p, &k, 10, VecchiaOrdering::default()).unwrap();
        let w = DiagW::new(vec![1e12; 100]).unwrap();
        let rhs: Vec<f64> = (0..100).map(|i| 1.0 + i as f64).collect();
        let (x, _) = solve_vecchia_system(&v, &w, &rhs, VecchiaSolvePath::Precision, &cfg(1e-14)).unwrap();
        for (xi, ri) in x.iter().zip(&rhs) {
            assert!((xi - ri / 1e12).abs() < 1e-6 * ri / 1e12);
        }
        // pseudo nugget 1e-12 makes the observable Vecchia factor nearly exact
        let pre = obs_vecchia_precond(&locs, &p, &k, &w, 10, VecchiaOrdering::default()).unwrap();
        let ld = vecchia_logdet_slq(&v, &w, &pre, &cfg(1e-10)).unwrap();
        assert!((ld.logdet - w.logdet()).abs() < 1e-6 * w.logdet(), "{} {}", ld.logdet, w.logdet());
    }

    #[test]
    fn full_conditioning_matches_dense_gaussian_solve() {
        let (locs, p, k) = setup(150, 2);
        let v = build_vecchia(&locs, &p, &k, 149, VecchiaOrdering::default()).unwrap();
        let w = DiagW::gaussian(150, p.sigma2).unwrap();
        let mut a = Cholesky::new(cross_cov(&locs, &locs, &k, &p).unwrap().as_ref(), "oracle")
            .unwrap()
            .inverse();
        for i in 0..150 {
            a[(i, i)] += 1.0 / p.sigma2;
        }
        let rhs: Vec<f64> = (0..150).map(|i| (i as f64 * 0.21).cos()).collect();
        let want = Cholesky::new(a.as_ref(), "oracle").unwrap().solve_vec(&rhs);
        let pre = obs_vecchia_precond(&locs, &p, &k, &w, 149, VecchiaOrdering::default()).unwrap();
        let (x, rep) = solve_vecchia_system(&v, &w, &rhs, VecchiaSolvePath::Covariance(&pre), &cfg(1e-10)).unwrap();
        assert!(rep.iterations <= 2);
        for (a, b) in x.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn both_paths_invert_the_forward_map() {
        let (locs, p, k) = setup(400, 3);
        let v = build_vecchia(&locs, &p, &k, 10, VecchiaOrdering::Random(4)).unwrap();
        let w = synthetic_w(400);
        let u: Vec<f64> = (0..400).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut rhs = vec![0.0; 400];
        PrecisionPlusW { model: &v, w: &w }.apply(&u, &mut rhs);
        let tol = 1e-8;
        let fitc = fitc_precond_vecchia(&locs, &select_random(&locs, 30, 1).unwrap(), &p, &k, &w).unwrap();
        let (x1, _) = solve_vecchia_system(&v, &w, &rhs, VecchiaSolvePath::Precision, &cfg(tol)).unwrap();
        let (x2, _) = solve_vecchia_system(&v, &w, &rhs, VecchiaSolvePath::Covariance(&fitc), &cfg(tol)).unwrap();
        let e1 = norm2(&x1.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
        let e2 = norm2(&x2.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
        let e12 = norm2(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(e1 < 10.0 * tol && e2 < 10.0 * tol && e12 < 10.0 * tol, "{e1} {e2} {e12}");
        let dense = Cholesky::new(dense_system(&v, &w).as_ref(), "oracle").unwrap().solve_vec(&rhs);
        assert!(norm2(&x1.iter().zip(&dense).map(|(a, b)| a - b).collect::<Vec<_>>()) < 10.0 * tol);
    }

    #[test]
    fn slq_logdet_is_unbiased_and_exact_with_exact_preconditioner() {
        let (locs, p, k) = setup(250, 5);
        let v = build_vecchia(&locs, &p, &k, 10, VecchiaOrdering::Random(6)).unwrap();
        let w = synthetic_w(250);
        let want = Cholesky::new(dense_system(&v, &w).as_ref(), "oracle").unwrap().logdet();
        let fitc = fitc_precond_vecchia(&locs, &select_random(&locs, 25, 2).unwrap(), &p, &k, &w).unwrap();
        let c = CgConfig {
            tol: 1e-8,
            num_probes: 200,
            seed: 11,
            ..CgConfig::default()
        };
        let est = vecchia_logdet_slq(&v, &w, &fitc, &c).unwrap();
        assert!((est.logdet - want).abs() < 3.0 * est.std_error(), "{} vs {want} (se {})", est.logdet, est.std_error());

        let vf = build_vecchia(&locs, &p, &k, 249, VecchiaOrdering::Random(6)).unwrap();
        let exact = obs_vecchia_precond(&locs, &p, &k, &w, 249, VecchiaOrdering::Random(6)).unwrap();
        let want = Cholesky::new(dense_system(&vf, &w).as_ref(), "oracle").unwrap().logdet();
        let est = vecchia_logdet_slq(&vf, &w, &exact, &CgConfig { num_probes: 5, ..c }).unwrap();
        assert!((est.logdet - want).abs() < 1e-6, "{} vs {want}", est.logdet);
    }

    fn dense_gaussian_nll(sigma: &DenseMatrix, r: &[f64]) -> f64 {
        let ch = Cholesky::new(sigma.as_ref(), "oracle").unwrap();
        let n = r.len() as f64;
        0.5 * (n * (2.0 * std::f64::consts::PI).ln() + ch.logdet() + dot(r, &ch.solve_vec(r)))
    }

    #[test]
    fn both_nll_modes_are_exact_under_full_conditioning() {
        let (locs, p, k) = setup(120, 7);
        let y: Vec<f64> = (0..120).map(|i| (i as f64 * 0.13).sin() + 0.5).collect();
        let x = DenseMatrix::from_fn(120, 1, |_, _| 1.0);
        let p = p.with_beta(vec![0.4]).unwrap();
        let mut sigma = cross_cov(&locs, &locs, &k, &p).unwrap();
        for i in 0..120 {
            sigma[(i, i)] += p.sigma2;
        }
        let r: Vec<f64> = y.iter().map(|v| v - 0.4).collect();
        let want = dense_gaussian_nll(&sigma, &r);
        let ord = VecchiaOrdering::Random(1);
        let obs = vecchia_nll_gaussian(&locs, &y, Some(&x), &p, &k, 119, ord, &NllMode::ObservableDirect).unwrap();
        assert!((obs.nll - want).abs() < 1e-6, "{} {want}", obs.nll);
        let latent = NllMode::LatentIterative {
            precond: VecchiaPrecondKind::ObsVecchia { m_v: 119 },
            cfg: CgConfig {
                tol: 1e-10,
                num_probes: 4,
                ..CgConfig::default()
            },
        };
        let lat = vecchia_nll_gaussian(&locs, &y, Some(&x), &p, &k, 119, ord, &latent).unwrap();
        assert!((lat.nll - want).abs() < 1e-6, "{} {want}", lat.nll);
    }

    #[test]
    fn huge_nugget_tends_to_pure_noise() {
        let (locs, p, k) = setup(80, 8);
        let s2 = 1e8;
        let p = CovParams { sigma2: s2, ..p };
        let y: Vec<f64> = (0..80).map(|i| 1e3 * (i as f64 * 0.3).cos()).collect();
        let noise: f64 = y.iter().map(|r| 0.5 * (2.0 * std::f64::consts::PI * s2).ln() + r * r / (2.0 * s2)).sum();
        let obs = vecchia_nll_gaussian(&locs, &y, None, &p, &k, 10, VecchiaOrdering::default(), &NllMode::ObservableDirect)
            .unwrap();
        assert!((obs.nll - noise).abs() < 1e-5 * noise.abs(), "{} {noise}", obs.nll);
    }
}
