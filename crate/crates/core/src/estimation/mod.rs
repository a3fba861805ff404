//! Maximum-likelihood estimation of (σ², σ₁², ρ) with β profiled out, and
//! scoring rules for predictive distributions.

pub mod lbfgs;
pub mod objective;
pub mod score;

use std::time::Instant;

use crate::error::{check_len, GpError, Result};
use crate::fsa::{residual, FsaModel};
use crate::inducing::InducingSet;
use crate::kernels::{CovParams, KernelSpec, LocationSet, TaperSpec};
use crate::krylov::{CgConfig, CvMode, ProbeDist};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::precond::PrecondKind;

pub use lbfgs::{minimize, LbfgsConfig, LbfgsOutcome};
pub use objective::{nll_iterative, ols_beta, profile_beta, Backend, Evaluation, Objective, ObjectiveConfig};
pub use score::{crps_gaussian, score, Scores};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Driver {
    #[default]
    Lbfgs,
    /// Newton-type steps with the Fisher information in place of the Hessian.
    FisherScoring,
}

impl Driver {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbfgs" => Ok(Self::Lbfgs),
            "fisher" | "fisher-scoring" => Ok(Self::FisherScoring),
            _ => Err(GpError::Config(format!("unknown optimizer '{s}' (lbfgs, fisher)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub backend: Backend,
    pub driver: Driver,
    pub max_evals: usize,
    /// Convergence when ‖∇NLL‖∞ over the transformed parameters ≤ grad_tol·n.
    pub grad_tol: f64,
    pub lbfgs_memory: usize,
    /// Optimize log θₖ (true) or θₖ itself, in the order (σ², σ₁², ρ).
    pub log_scale: [bool; 3],
    pub cg: CgConfig,
    pub precond: PrecondKind,
    pub cv: CvMode,
    /// Probe seed, fixed for the whole fit.
    pub seed: u64,
    /// Lower bound of σ² and σ₁² relative to the sample variance of y.
    pub variance_floor: f64,
    /// Starting values; derived from the data when absent.
    pub init: Option<[f64; 3]>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Iterative,
            driver: Driver::Lbfgs,
            max_evals: 200,
            grad_tol: 1e-3,
            lbfgs_memory: 10,
            log_scale: [true; 3],
            cg: CgConfig::default(),
            precond: PrecondKind::Fitc,
            cv: CvMode::Optimal,
            seed: 0,
            variance_floor: 1e-6,
            init: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.variance_floor > 0.0) {
            return Err(GpError::Config("grad_tol and variance_floor must be positive".into()));
        }
        if self.max_evals == 0 || self.lbfgs_memory == 0 {
            return Err(GpError::Config("max_evals and lbfgs_memory must be positive".into()));
        }
        if self.backend == Backend::Iterative
            && self.cg.probe_dist != ProbeDist::PrecondGaussian
            && self.precond != PrecondKind::None
        {
            return Err(GpError::Config(
                "the iterative likelihood needs probes drawn from N(0, P) when a preconditioner is used".into(),
            ));
        }
        self.cg.validate()
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: CovParams,
    pub nll: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Final ∞-norm of the gradient over the transformed parameters.
    pub grad_norm: f64,
    pub converged: bool,
    pub wall_time_secs: f64,
    pub backend: &'static str,
    /// Objective after each accepted step.
    pub trace: Vec<f64>,
}

/// Observations at `locs` with design matrix `x` (possibly zero columns).
#[derive(Clone, Debug)]
pub struct FitData {
    pub locs: LocationSet,
    pub y: Vec<f64>,
    pub x: DenseMatrix,
}

impl FitData {
    pub fn new(locs: LocationSet, y: Vec<f64>, x: Option<DenseMatrix>) -> Result<Self> {
        let n = locs.len();
        check_len("response", n, y.len())?;
        let x = x.unwrap_or_else(|| DenseMatrix::zeros(n, 0));
        check_len("design rows", n, x.nrows())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::Domain("response contains non-finite values".into()));
        }
        Ok(Self { locs, y, x })
    }
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// Starting values σ² = σ₁² = var(y − Xβ_OLS)/2 and ρ = diag/4 plus the box
/// the optimizer works in, both on the raw scale.
pub fn initial_values(data: &FitData, cfg: &FitConfig) -> Result<([f64; 3], [f64; 3], [f64; 3])> {
    let scale = {
        let v = sample_var(&data.y);
        if v > 0.0 {
            v
        } else {
            1.0
        }
    };
    let floor = cfg.variance_floor * scale;
    let diag = data.locs.bbox_diagonal().max(f64::MIN_POSITIVE);
    let lo = [floor, floor, 1e-4 * diag];
    let hi = [1e4 * scale, 1e4 * scale, 10.0 * diag];
    let init = match cfg.init {
        Some(t) => t,
        None => {
            let beta = ols_beta(&data.y, &data.x)?;
            let half = 0.5 * sample_var(&residual(&data.y, &data.x, &beta)?);
            let v = half.max(10.0 * floor);
            [v, v, 0.25 * diag]
        }
    };
    let init = [0, 1, 2].map(|k| init[k].clamp(lo[k], hi[k]));
    Ok((init, lo, hi))
}

fn to_internal(theta: [f64; 3], log: [bool; 3]) -> Vec<f64> {
    (0..3).map(|k| if log[k] { theta[k].ln() } else { theta[k] }).collect()
}

fn to_raw(u: &[f64], log: [bool; 3]) -> [f64; 3] {
    [0, 1, 2].map(|k| if log[k] { u[k].exp() } else { u[k] })
}

/// Maximum-likelihood fit of the FSA model on fixed inducing points and taper.
pub fn fit(
    data: &FitData,
    inducing: &InducingSet,
    kernel: &KernelSpec,
    taper: &TaperSpec,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let start = Instant::now();
    let (init, lo, hi) = initial_values(data, cfg)?;
    let base = FsaModel::assemble(&data.locs, inducing, &CovParams::new(init[0], init[1], init[2])?, kernel, taper)?;
    let n = base.n();
    let mut cg = cfg.cg.clone();
    cg.seed = cfg.seed;
    let obj = Objective::new(
        base,
        &data.y,
        &data.x,
        ObjectiveConfig {
            backend: cfg.backend,
            cg,
            precond: cfg.precond,
            cv: cfg.cv,
        },
    )?;
    let log = cfg.log_scale;
    let lo_u = to_internal(lo, log);
    let hi_u = to_internal(hi, log);
    let objective = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let theta = to_raw(u, log);
        let ev = obj.evaluate(theta)?;
        let g = (0..3).map(|k| if log[k] { ev.grad[k] * theta[k] } else { ev.grad[k] }).collect();
        Ok((ev.nll, g))
    };
    let tol = cfg.grad_tol * n as f64;
    let outcome = match cfg.driver {
        Driver::Lbfgs => minimize(
            objective,
            &to_internal(init, log),
            &lo_u,
            &hi_u,
            &LbfgsConfig {
                max_evals: cfg.max_evals,
                grad_tol: tol,
                memory: cfg.lbfgs_memory,
            },
        )?,
        Driver::FisherScoring => fisher_scoring(&obj, objective, init, &lo_u, &hi_u, log, cfg.max_evals, tol)?,
    };
    let theta = to_raw(&outcome.x, log);
    let beta = obj.evaluate(theta)?.beta;
    let params = CovParams::new(theta[0], theta[1], theta[2])?.with_beta(beta)?;
    Ok(FitResult {
        params,
        nll: outcome.f,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations + 1,
        grad_norm: outcome.grad_norm,
        converged: outcome.converged,
        wall_time_secs: start.elapsed().as_secs_f64(),
        backend: cfg.backend.label(),
        trace: outcome.trace,
    })
}

/// Scoring iterations u ← u − t·F_u⁻¹∇_u with F_u the Fisher information in
/// the transformed coordinates and t halved until the objective decreases.
#[allow(clippy::too_many_arguments)]
fn fisher_scoring<F>(
    obj: &Objective<'_>,
    mut f: F,
    init: [f64; 3],
    lo: &[f64],
    hi: &[f64],
    log: [bool; 3],
    max_evals: usize,
    tol: f64,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut u = to_internal(init, log);
    let (mut fu, mut g) = f(&u)?;
    let mut evals = 1;
    let mut iterations = 0;
    let mut trace = vec![fu];
    let gnorm = |g: &[f64]| g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    while gnorm(&g) > tol && evals < max_evals {
        let theta = to_raw(&u, log);
        let raw = obj.fisher(theta)?;
        let jac: [f64; 3] = [0, 1, 2].map(|k| if log[k] { theta[k] } else { 1.0 });
        let fm = DenseMatrix::from_fn(3, 3, |k, l| raw[k][l] * jac[k] * jac[l]);
        let step = Cholesky::new(fm.as_ref(), "Fisher information")?.solve_vec(&g);
        let mut t = 1.0;
        let mut accepted = false;
        while evals < max_evals && t > 1e-6 {
            let un: Vec<f64> = (0..3).map(|k| (u[k] - t * step[k]).clamp(lo[k], hi[k])).collect();
            evals += 1;
            if let Ok((fnew, gnew)) = f(&un) {
                if fnew < fu {
                    u = un;
                    fu = fnew;
                    g = gnew;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        trace.push(fu);
    }
    let grad_norm = gnorm(&g);
    Ok(LbfgsOutcome {
        x: u,
        f: fu,
        grad: g,
        grad_norm,
        iterations,
        evaluations: evals,
        converged: grad_norm <= tol,
        trace,
    })
}
