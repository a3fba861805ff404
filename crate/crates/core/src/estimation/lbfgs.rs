use std::collections::VecDeque;

use crate::error::{GpError, Result};
use crate::linalg::dot;

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
/// Relative objective change below which the iteration counts as stalled.
const STALL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsConfig {
    /// Objective/gradient evaluations, including rejected trial points.
    pub max_evals: usize,
    /// Stop once the projected gradient ∞-norm is at most this.
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_evals: 200,
            grad_tol: 1e-5,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    /// ∞-norm of the projected gradient at `x`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with f(x₀).
    pub trace: Vec<f64>,
}

/// Gradient with components that push out of the box at an active bound zeroed.
fn projected_grad(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| {
            if (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Limited-memory BFGS with box constraints handled by projection. A failed
/// or non-finite evaluation is treated as an infinitely bad trial point.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let k = x0.len();
    if lo.len() != k || hi.len() != k || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
        return Err(GpError::Config("LBFGS bounds must match x0 and satisfy lo <= hi".into()));
    }
    if cfg.memory == 0 || cfg.max_evals == 0 || !(cfg.grad_tol > 0.0) {
        return Err(GpError::Config("LBFGS needs memory > 0, max_evals > 0 and grad_tol > 0".into()));
    }
    let proj = |x: &mut [f64]| {
        for ((xi, l), h) in x.iter_mut().zip(lo).zip(hi) {
            *xi = xi.clamp(*l, *h);
        }
    };
    let mut x = x0.to_vec();
    proj(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(GpError::Numerical(format!("objective is not finite at the starting point ({fx})")));
    }
    let mut evals = 1;
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let pg = projected_grad(&x, &g, lo, hi);
        let gnorm = pg.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if gnorm <= cfg.grad_tol {
            converged = true;
            break;
        }
        if evals >= cfg.max_evals {
            break;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut d = two_loop(&pg, &hist);
        for (di, &fr) in d.iter_mut().zip(&free) {
            if !fr {
                *di = 0.0;
            }
        }
        if !(dot(&d, &pg) < 0.0) {
            hist.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let mut t = if hist.is_empty() {
            (1.0f64).min(1.0 / d.iter().fold(0.0f64, |a, b| a.max(b.abs())))
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if evals >= cfg.max_evals {
                break;
            }
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            proj(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            evals += 1;
            match f(&xn) {
                Ok((fnew, gnew)) if fnew.is_finite() && gnew.iter().all(|v| v.is_finite()) => {
                    if fnew <= fx + ARMIJO * dot(&g, &step) {
                        accepted = Some((xn, fnew, gnew, step));
                        break;
                    }
                }
                Ok(_) => log::debug!("LBFGS trial point rejected: non-finite objective"),
                Err(e) => log::debug!("LBFGS trial point rejected: {e}"),
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew, s)) = accepted else {
            if hist.is_empty() {
                break;
            }
            // retry once from steepest descent before giving up
            hist.clear();
            continue;
        };
        iterations += 1;
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        let stalled = (fx - fnew).abs() <= STALL_TOL * fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        trace.push(fx);
        if stalled {
            break;
        }
    }
    let pg = projected_grad(&x, &g, lo, hi);
    let grad_norm = pg.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(LbfgsOutcome {
        x,
        f: fx,
        grad: g,
        grad_norm,
        iterations,
        evaluations: evals,
        converged: converged || grad_norm <= cfg.grad_tol,
        trace,
    })
}

/// −H g by the standard two-loop recursion over (s, y, 1/sᵀy) pairs.
fn two_loop(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}
