use rayon::prelude::*;

use super::CgConfig;
use crate::error::{check_len, GpError, Result};
use crate::linalg::{axpy, dot, norm2, TridiagMatrix};
use crate::operator::{LinearOperator, LinearSolver};
use crate::precond::Preconditioner;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖A x − b‖₂ as tracked by the recursion.
    pub residual: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Turn a non-converged report into an error.
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(GpError::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

#[derive(Clone, Debug)]
pub struct PcgOutput {
    pub x: Vec<f64>,
    /// Lanczos matrix of P^{-1/2} A P^{-1/2} started at P^{-1/2} b.
    pub tridiag: TridiagMatrix,
    pub report: SolveReport,
}

/// Preconditioned CG from x₀ = 0, stopping when the unpreconditioned
/// residual satisfies ‖r‖₂ < `cfg.tol` (absolute) or after `cfg.max_iter`
/// matrix-vector products.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    p: &dyn Preconditioner,
    b: &[f64],
    cfg: &CgConfig,
) -> Result<PcgOutput> {
    cfg.validate()?;
    let n = a.dim();
    check_len("CG right-hand side", n, b.len())?;
    check_len("preconditioner dimension", n, p.dim())?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = norm2(&r);
    if r0 < cfg.tol {
        return Ok(PcgOutput {
            x,
            tridiag: TridiagMatrix::default(),
            report: SolveReport {
                iterations: 0,
                residual: r0,
                converged: true,
            },
        });
    }
    let mut z = p.solve_vec(&r);
    let mut h = z.clone();
    let mut v = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let (mut alpha_prev, mut beta_prev) = (1.0, 0.0);
    let mut diag = Vec::new();
    let mut offdiag = Vec::new();
    let mut residual = r0;
    let mut converged = false;
    for l in 0..cfg.max_iter {
        a.apply(&h, &mut v);
        let hv = dot(&h, &v);
        if !(hv > 0.0) || !(rz > 0.0) {
            return Err(GpError::Breakdown {
                iteration: l + 1,
                reason: format!("hᵀAh = {hv:e}, rᵀP⁻¹r = {rz:e}; operator or preconditioner not positive definite"),
            });
        }
        let alpha = rz / hv;
        axpy(alpha, &h, &mut x);
        axpy(-alpha, &v, &mut r);
        residual = norm2(&r);
        converged = residual < cfg.tol;
        p.solve(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        if beta < 0.0 || !beta.is_finite() {
            return Err(GpError::Breakdown {
                iteration: l + 1,
                reason: format!("β = {beta:e}; preconditioner not positive definite"),
            });
        }
        for (hi, zi) in h.iter_mut().zip(&z) {
            *hi = zi + beta * *hi;
        }
        diag.push(1.0 / alpha + beta_prev / alpha_prev);
        if l > 0 {
            offdiag.push(beta_prev.sqrt() / alpha_prev);
        }
        alpha_prev = alpha;
        beta_prev = beta;
        rz = rz_new;
        if converged {
            break;
        }
    }
    let iterations = diag.len();
    Ok(PcgOutput {
        x,
        tridiag: TridiagMatrix::new(diag, offdiag),
        report: SolveReport {
            iterations,
            residual,
            converged,
        },
    })
}

/// Column-wise [`pcg_solve`] over several right-hand sides, run in parallel.
/// Each column uses exactly the single-RHS arithmetic.
pub fn pcg_solve_multi(
    a: &dyn LinearOperator,
    p: &dyn Preconditioner,
    rhs: &[Vec<f64>],
    cfg: &CgConfig,
) -> Result<Vec<PcgOutput>> {
    rhs.par_iter().map(|b| pcg_solve(a, p, b, cfg)).collect()
}

/// A⁻¹ through [`pcg_solve`]; non-convergence is an error.
pub struct PcgSolver<'a> {
    pub a: &'a dyn LinearOperator,
    pub p: &'a dyn Preconditioner,
    pub cfg: CgConfig,
}

impl LinearSolver for PcgSolver<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let out = pcg_solve(self.a, self.p, b, &self.cfg)?;
        out.report.require_converged()?;
        Ok(out.x)
    }
}
