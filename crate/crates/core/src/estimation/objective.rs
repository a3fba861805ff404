use crate::error::{check_len, GpError, Result};
use crate::fsa::{fisher_exact, fisher_ste, residual, ExactFsa, FsaDerivatives, FsaModel};
use crate::kernels::{CovParams, Param};
use crate::krylov::{slq_logdet, ste_grad_trace_cv, CgConfig, CvMode, PcgSolver};
use crate::linalg::{dot, mat_t_vec, symmetric_eigenvalues, Cholesky, DenseMatrix};
use crate::operator::LinearSolver;
use crate::precond::{build_for_model, PrecondKind, Preconditioner};

/// XᵀX-type Gram matrices with reciprocal condition number below this are
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Generalized least squares β = (XᵀA⁻¹X)⁻¹XᵀA⁻¹y with A⁻¹ from `solver`.
pub fn profile_beta(solver: &dyn LinearSolver, y: &[f64], x: &DenseMatrix) -> Result<Vec<f64>> {
    let n = solver.dim();
    check_len("response", n, y.len())?;
    check_len("design rows", n, x.nrows())?;
    let p = x.ncols();
    if p == 0 {
        return Ok(Vec::new());
    }
    let mut ainv_x = DenseMatrix::zeros(n, p);
    for j in 0..p {
        let s = solver.solve(x.col_as_slice(j))?;
        ainv_x.col_as_slice_mut(j).copy_from_slice(&s);
    }
    let mut gram = x.transpose() * &ainv_x;
    for i in 0..p {
        for j in 0..i {
            let avg = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = avg;
            gram[(j, i)] = avg;
        }
    }
    let ev = symmetric_eigenvalues(gram.as_ref())?;
    if !(ev[0] > RANK_TOL * ev[p - 1].abs()) {
        return Err(GpError::Numerical(format!(
            "design matrix is rank deficient under the GLS metric (eigenvalues {:e} .. {:e})",
            ev[0],
            ev[p - 1]
        )));
    }
    let mut rhs = vec![0.0; p];
    mat_t_vec(&ainv_x, y, &mut rhs);
    Ok(Cholesky::new(gram.as_ref(), "GLS normal equations")?.solve_vec(&rhs))
}

/// Ordinary least squares.
pub fn ols_beta(y: &[f64], x: &DenseMatrix) -> Result<Vec<f64>> {
    profile_beta(&IdentitySolver(y.len()), y, x)
}

struct IdentitySolver(usize);

impl LinearSolver for IdentitySolver {
    fn dim(&self) -> usize {
        self.0
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(b.to_vec())
    }
}

/// Iterative NLL at the model's parameters (β from `model.params.beta`):
/// log det by SLQ with `cfg.num_probes` probes, the quadratic form by PCG.
pub fn nll_iterative(
    model: &FsaModel,
    y: &[f64],
    x: &DenseMatrix,
    precond: &dyn Preconditioner,
    cfg: &CgConfig,
) -> Result<f64> {
    let r = residual(y, x, &model.params.beta)?;
    let solver = PcgSolver {
        a: model,
        p: precond,
        cfg: cfg.clone(),
    };
    let u = solver.solve(&r)?;
    let slq = slq_logdet(model, precond, cfg)?;
    let n = model.n() as f64;
    Ok(0.5 * (n * (2.0 * std::f64::consts::PI).ln() + slq.logdet + dot(&r, &u)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    /// Exact Woodbury/Sylvester computations from a Cholesky factor of Σ̃_s.
    Cholesky,
    /// PCG, SLQ and stochastic trace estimation.
    #[default]
    Iterative,
}

impl Backend {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cholesky" | "exact" => Ok(Self::Cholesky),
            "iterative" => Ok(Self::Iterative),
            _ => Err(GpError::Config(format!("unknown backend '{s}' (cholesky, iterative)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Cholesky => "cholesky",
            Self::Iterative => "iterative",
        }
    }
}

/// Settings for one objective evaluation.
#[derive(Clone, Debug)]
pub struct ObjectiveConfig {
    pub backend: Backend,
    pub cg: CgConfig,
    pub precond: PrecondKind,
    pub cv: CvMode,
}

/// Profiled negative log-likelihood with its gradient over (σ², σ₁², ρ).
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub nll: f64,
    pub grad: [f64; 3],
    pub beta: Vec<f64>,
}

/// The data and model structure held fixed during a fit.
pub struct Objective<'a> {
    base: FsaModel,
    y: &'a [f64],
    x: &'a DenseMatrix,
    cfg: ObjectiveConfig,
}

impl<'a> Objective<'a> {
    /// `base` fixes locations, inducing points, kernel and taper pattern.
    pub fn new(base: FsaModel, y: &'a [f64], x: &'a DenseMatrix, cfg: ObjectiveConfig) -> Result<Self> {
        check_len("response", base.n(), y.len())?;
        check_len("design rows", base.n(), x.nrows())?;
        cfg.cg.validate()?;
        if matches!(cfg.precond, PrecondKind::PivotedCholesky { .. }) && cfg.cv != CvMode::None && cfg.backend == Backend::Iterative {
            return Err(GpError::Config(
                "the pivoted Cholesky preconditioner has no gradient traces; use cv = none".into(),
            ));
        }
        Ok(Self { base, y, x, cfg })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn model_at(&self, theta: [f64; 3]) -> Result<FsaModel> {
        let params = CovParams::new(theta[0], theta[1], theta[2])?;
        self.base.reparameterize(&params)
    }

    pub fn evaluate(&self, theta: [f64; 3]) -> Result<Evaluation> {
        let model = self.model_at(theta)?;
        let derivs = FsaDerivatives::new(&model);
        let n = model.n() as f64;
        let mut du = vec![0.0; model.n()];
        let (nll, grad, beta) = match self.cfg.backend {
            Backend::Cholesky => {
                let ex = ExactFsa::new(&model)?;
                let beta = profile_beta(&ex, self.y, self.x)?;
                let r = residual(self.y, self.x, &beta)?;
                let u = ex.solve_vec(&r)?;
                let traces = ex.exact_traces(&derivs);
                let mut g = [0.0; 3];
                for p in Param::ALL {
                    derivs.apply(p, &u, &mut du);
                    g[p.index()] = 0.5 * (traces[p.index()] - dot(&u, &du));
                }
                (0.5 * (n * (2.0 * std::f64::consts::PI).ln() + ex.logdet() + dot(&r, &u)), g, beta)
            }
            Backend::Iterative => {
                let pre = build_for_model(&model, self.cfg.precond, Some(&derivs))?;
                let solver = PcgSolver {
                    a: &model,
                    p: pre.as_ref(),
                    cfg: self.cfg.cg.clone(),
                };
                let beta = profile_beta(&solver, self.y, self.x)?;
                let r = residual(self.y, self.x, &beta)?;
                let u = solver.solve(&r)?;
                let slq = slq_logdet(&model, pre.as_ref(), &self.cfg.cg)?;
                if !slq.all_converged() {
                    return Err(GpError::NotConverged {
                        iterations: self.cfg.cg.max_iter,
                        residual: slq.reports.iter().map(|r| r.residual).fold(0.0, f64::max),
                    });
                }
                let mut g = [0.0; 3];
                for p in Param::ALL {
                    let tr = ste_grad_trace_cv(
                        &slq.probes,
                        |a, b| {
                            derivs.apply(p, a, b);
                            Ok(())
                        },
                        pre.as_ref(),
                        p,
                        self.cfg.cv,
                    )?;
                    derivs.apply(p, &u, &mut du);
                    g[p.index()] = 0.5 * (tr - dot(&u, &du));
                }
                (0.5 * (n * (2.0 * std::f64::consts::PI).ln() + slq.logdet + dot(&r, &u)), g, beta)
            }
        };
        if !nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(GpError::Numerical(format!("objective not finite at θ = {theta:?}")));
        }
        Ok(Evaluation { nll, grad, beta })
    }

    /// Fisher information over raw (σ², σ₁², ρ): exact for the Cholesky
    /// backend, stochastic with `cg.num_probes` probes otherwise.
    pub fn fisher(&self, theta: [f64; 3]) -> Result<[[f64; 3]; 3]> {
        let model = self.model_at(theta)?;
        let derivs = FsaDerivatives::new(&model);
        match self.cfg.backend {
            Backend::Cholesky => Ok(fisher_exact(&ExactFsa::new(&model)?, &derivs)),
            Backend::Iterative => {
                let pre = build_for_model(&model, self.cfg.precond, None)?;
                let solver = PcgSolver {
                    a: &model,
                    p: pre.as_ref(),
                    cfg: self.cfg.cg.clone(),
                };
                fisher_ste(&derivs, &solver, self.cfg.cg.num_probes, self.cfg.cg.seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::model::tests::instance;
    use crate::fsa::nll_exact;
    use crate::linalg::mat_vec;

    /// Dense GLS oracle.
    fn dense_gls(a: &DenseMatrix, y: &[f64], x: &DenseMatrix) -> Vec<f64> {
        let ainv = Cholesky::new(a.as_ref(), "oracle").unwrap().inverse();
        let xt_ainv = x.transpose() * &ainv;
        let g = &xt_ainv * x;
        let mut b = vec![0.0; x.ncols()];
        mat_vec(&xt_ainv, y, &mut b);
        Cholesky::new(g.as_ref(), "oracle").unwrap().solve_vec(&b)
    }

    fn design(n: usize) -> DenseMatrix {
        DenseMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.05).sin() })
    }

    #[test]
    fn gls_special_cases() {
        let y = vec![1.0, 2.0, 6.0];
        let ones = DenseMatrix::from_fn(3, 1, |_, _| 1.0);
        assert!((ols_beta(&y, &ones).unwrap()[0] - 3.0).abs() < 1e-14);
        let x = DenseMatrix::from_fn(3, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        // OLS fit of a line through (0,1),(1,2),(2,6): slope 2.5, intercept 0.5
        let b = ols_beta(&y, &x).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-12 && (b[1] - 2.5).abs() < 1e-12);
        let dup = DenseMatrix::from_fn(3, 2, |_, _| 1.0);
        assert!(ols_beta(&y, &dup).is_err());
    }

    #[test]
    fn gls_matches_dense_oracle() {
        let model = instance(300, 20, 0.1, 3);
        let ex = ExactFsa::new(&model).unwrap();
        let x = design(300);
        let y: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64 * 0.11).cos()).collect();
        let got = profile_beta(&ex, &y, &x).unwrap();
        let want = dense_gls(&model.to_dense(), &y, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    fn objective<'a>(model: &FsaModel, y: &'a [f64], x: &'a DenseMatrix, backend: Backend) -> Objective<'a> {
        let cfg = ObjectiveConfig {
            backend,
            cg: CgConfig {
                tol: 1e-6,
                num_probes: 30,
                seed: 5,
                ..CgConfig::default()
            },
            precond: PrecondKind::Fitc,
            cv: CvMode::Optimal,
        };
        Objective::new(model.clone(), y, x, cfg).unwrap()
    }

    #[test]
    fn profiled_objective_is_minimal_over_beta() {
        let model = instance(200, 15, 0.1, 4);
        let x = design(200);
        let y: Vec<f64> = (0..200).map(|i| 0.5 + (i as f64 * 0.3).sin()).collect();
        let obj = objective(&model, &y, &x, Backend::Cholesky);
        let ev = obj.evaluate(model.params.theta()).unwrap();
        for shift in [[0.1, 0.0], [0.0, -0.2], [-0.05, 0.05], [1e-3, 1e-3]] {
            let mut m = model.clone();
            m.params.beta = ev.beta.iter().zip(shift).map(|(b, s)| b + s).collect();
            assert!(ev.nll <= nll_exact(&m, &y, &x).unwrap() + 1e-10);
        }
        let mut m = model.clone();
        m.params.beta = ev.beta.clone();
        assert!((ev.nll - nll_exact(&m, &y, &x).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn profiled_gradient_matches_finite_differences() {
        let model = instance(150, 10, 0.1, 8);
        let x = design(150);
        let y: Vec<f64> = (0..150).map(|i| (i as f64 * 0.2).cos()).collect();
        let obj = objective(&model, &y, &x, Backend::Cholesky);
        let theta = model.params.theta();
        let g = obj.evaluate(theta).unwrap().grad;
        for k in 0..3 {
            // central differences in log θ check g_log = g_raw · θ
            let h = 1e-5;
            let mut tp = theta;
            let mut tm = theta;
            tp[k] *= (h as f64).exp();
            tm[k] *= (-h as f64).exp();
            let fd = (obj.evaluate(tp).unwrap().nll - obj.evaluate(tm).unwrap().nll) / (2.0 * h);
            let glog = g[k] * theta[k];
            assert!((fd - glog).abs() < 1e-5 * glog.abs().max(1.0), "{k}: {fd} vs {glog}");
        }
    }

    #[test]
    fn iterative_objective_is_deterministic_and_close_to_exact() {
        let model = instance(300, 20, 0.1, 9);
        let x = design(300);
        let y: Vec<f64> = (0..300).map(|i| (i as f64 * 0.07).sin()).collect();
        let it = objective(&model, &y, &x, Backend::Iterative);
        let ex = objective(&model, &y, &x, Backend::Cholesky);
        let theta = model.params.theta();
        let a = it.evaluate(theta).unwrap();
        let b = it.evaluate(theta).unwrap();
        assert_eq!(a.nll.to_bits(), b.nll.to_bits());
        assert_eq!(a.grad, b.grad);
        let e = ex.evaluate(theta).unwrap();
        assert!((a.nll - e.nll).abs() < 1e-2 * e.nll.abs());
        for k in 0..3 {
            assert!((a.beta[k.min(1)] - e.beta[k.min(1)]).abs() < 1e-3);
        }
    }
}
