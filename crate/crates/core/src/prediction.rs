//! Predictive means and variances under the FSA.
//!
//! With V = L_m⁻¹Σ_mn and V_p = L_m⁻¹Σ_mnp the low-rank cross-covariance is
//! VᵀV_p and the tapered residual cross-covariance S = Σˢ_nnp is sparse.

use faer::MatMut;
use rayon::prelude::*;

use crate::error::{check_len, GpError, Result};
use crate::fsa::{residual, ExactFsa, FsaModel, SparsePart};
use crate::krylov::{lanczos, pcg_solve, stochastic_diag_samples, CgConfig, SolveReport};
use crate::kernels::{cross_taper_pattern, LocationSet, SparseRect};
use crate::linalg::{dot, mat_t_vec, mat_vec, Cholesky, DenseMatrix};
use crate::precond::{DiagPrecond, Preconditioner};
use crate::random::{gaussian_vec, stream};

/// Variances below `CLAMP_FRACTION·σ²` are replaced by that value.
pub const CLAMP_FRACTION: f64 = 1e-6;

/// Columns processed per dense block on the exact path.
const EXACT_BLOCK: usize = 64;

/// Cross-covariance pieces for a set of prediction locations.
#[derive(Clone, Debug)]
pub struct PredictionInputs {
    pub locs_p: LocationSet,
    /// n_p×p covariates, required when the model has a linear mean.
    pub xp: Option<DenseMatrix>,
    v_p: DenseMatrix,
    /// n×n_p
    s: SparseRect,
    /// n_p×n, row j is column j of `s`.
    s_t: SparseRect,
}

impl PredictionInputs {
    pub fn new(model: &FsaModel, locs_p: &LocationSet, xp: Option<DenseMatrix>) -> Result<Self> {
        check_len("prediction location dimension", model.locs.dim(), locs_p.dim())?;
        if let Some(x) = &xp {
            check_len("prediction covariate rows", locs_p.len(), x.nrows())?;
        }
        let sigma_mnp = crate::kernels::cross_cov(&model.inducing.locs, locs_p, &model.kernel, &model.params)?;
        let mut v_p = sigma_mnp;
        model.chol_m().solve_lower_in_place(v_p.as_mut());
        let pattern = cross_taper_pattern(&model.locs, locs_p, model.taper.gamma)?;
        let v = model.v();
        let s = pattern.map_values(|i, j, d| {
            let low = dot(v.col_as_slice(i), v_p.col_as_slice(j));
            (model.kernel.cov(&model.params, d) - low) * model.taper.value(d)
        });
        let s_t = s.transpose();
        Ok(Self {
            locs_p: locs_p.clone(),
            xp,
            v_p,
            s,
            s_t,
        })
    }

    pub fn n_p(&self) -> usize {
        self.locs_p.len()
    }

    pub fn v_p(&self) -> &DenseMatrix {
        &self.v_p
    }

    /// Σˢ_nnp (n×n_p).
    pub fn sigma_s_cross(&self) -> &SparseRect {
        &self.s
    }

    /// Average stored entries per row of (Σˢ_nnp)ᵀ.
    pub fn n_gamma_p(&self) -> f64 {
        self.s.nnz() as f64 / self.n_p().max(1) as f64
    }

    /// Dense Σ†_nnp = VᵀV_p + Σˢ_nnp for the given column range.
    pub fn cross_dense_cols(&self, model: &FsaModel, cols: std::ops::Range<usize>) -> DenseMatrix {
        let vp = self.v_p.subcols(cols.start, cols.len());
        let mut c = model.v().transpose() * vp;
        for (k, j) in cols.enumerate() {
            let (rows, vals) = self.s_t.row(j);
            let col = c.col_as_slice_mut(k);
            for (&i, &x) in rows.iter().zip(vals) {
                col[i] += x;
            }
        }
        c
    }

    fn xp_beta(&self, beta: &[f64]) -> Result<Vec<f64>> {
        match &self.xp {
            Some(x) => {
                check_len("regression coefficients", x.ncols(), beta.len())?;
                let mut out = vec![0.0; self.n_p()];
                mat_vec(x, beta, &mut out);
                Ok(out)
            }
            None if beta.is_empty() => Ok(vec![0.0; self.n_p()]),
            None => Err(GpError::Config("prediction covariates are required for a linear mean".into())),
        }
    }
}

#[derive(Clone, Copy)]
pub enum Backend<'a> {
    Exact,
    Iterative {
        precond: &'a dyn Preconditioner,
        cfg: &'a CgConfig,
    },
}

#[derive(Clone, Debug)]
pub struct MeanOutput {
    pub mean: Vec<f64>,
    /// Present for the iterative backend.
    pub report: Option<SolveReport>,
}

/// μ_p = X_pβ + (Σ†_nnp)ᵀ α given α = Σ̃†⁻¹(y − Xβ).
pub fn mean_from_weights(model: &FsaModel, inputs: &PredictionInputs, alpha: &[f64]) -> Result<Vec<f64>> {
    check_len("prediction weights", model.n(), alpha.len())?;
    let mut mean = inputs.xp_beta(&model.params.beta)?;
    let mut va = vec![0.0; model.m()];
    mat_vec(model.v(), alpha, &mut va);
    let mut low = vec![0.0; inputs.n_p()];
    mat_t_vec(&inputs.v_p, &va, &mut low);
    let mut sp = vec![0.0; inputs.n_p()];
    inputs.s_t.matvec(alpha, &mut sp);
    for ((m, l), s) in mean.iter_mut().zip(&low).zip(&sp) {
        *m += l + s;
    }
    Ok(mean)
}

/// Predictive mean; a non-converged CG run is reported, not raised.
pub fn predict_mean(
    model: &FsaModel,
    inputs: &PredictionInputs,
    y: &[f64],
    x: Option<&DenseMatrix>,
    backend: Backend<'_>,
) -> Result<MeanOutput> {
    check_len("response length", model.n(), y.len())?;
    let r = match x {
        Some(x) => residual(y, x, &model.params.beta)?,
        None if model.params.beta.is_empty() => y.to_vec(),
        None => return Err(GpError::Config("training covariates are required for a linear mean".into())),
    };
    let (alpha, report) = match backend {
        Backend::Exact => (ExactFsa::new(model)?.solve_vec(&r)?, None),
        Backend::Iterative { precond, cfg } => {
            let out = pcg_solve(model, precond, &r, cfg)?;
            (out.x, Some(out.report))
        }
    };
    Ok(MeanOutput {
        mean: mean_from_weights(model, inputs, &alpha)?,
        report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarMethod {
    Exact,
    Simulation,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct VarOutput {
    pub var: Vec<f64>,
    pub method: VarMethod,
    /// Probe vectors (simulation) or Lanczos steps actually taken.
    pub num_probes: usize,
    /// Entries raised to the variance floor.
    pub clamped: usize,
}

/// σ₁² + σ² − diag((Σ†_nnp)ᵀ Σ̃†⁻¹ Σ†_nnp) with dense Woodbury solves.
pub fn predict_var_exact(exact: &ExactFsa<'_>, inputs: &PredictionInputs) -> Result<VarOutput> {
    let model = exact.model();
    let prior = model.params.sigma1_2 + model.params.sigma2;
    let starts: Vec<usize> = (0..inputs.n_p()).step_by(EXACT_BLOCK).collect();
    let blocks: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&a| {
            let b = (a + EXACT_BLOCK).min(inputs.n_p());
            let c = inputs.cross_dense_cols(model, a..b);
            let mut sol = c.clone();
            exact.solve_in_place(sol.as_mut());
            (0..c.ncols())
                .map(|k| prior - dot(c.col_as_slice(k), sol.col_as_slice(k)))
                .collect()
        })
        .collect();
    Ok(VarOutput {
        var: blocks.concat(),
        method: VarMethod::Exact,
        num_probes: 0,
        clamped: 0,
    })
}

/// The deterministic diagonals of the simulation algorithm.
#[derive(Clone, Debug)]
pub struct DeterministicTerms {
    /// diag(V_pᵀ V Σ̃†⁻¹ Vᵀ V_p)
    pub d1: Vec<f64>,
    /// diag(Sᵀ Σ̃†⁻¹ Vᵀ V_p)
    pub d2: Vec<f64>,
    /// diag(Sᵀ Σ̃_s⁻¹Vᵀ M̃⁻¹ V Σ̃_s⁻¹ S), M̃ = I + V Σ̃_s⁻¹ Vᵀ
    pub d3: Vec<f64>,
}

/// Solve A X = Vᵀ column by column with PCG; returns Xᵀ (m×n).
fn solve_low_rank_rhs(
    a: &dyn crate::operator::LinearOperator,
    p: &dyn Preconditioner,
    v: &DenseMatrix,
    cfg: &CgConfig,
) -> Result<DenseMatrix> {
    let (m, n) = (v.nrows(), v.ncols());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let rhs: Vec<f64> = (0..n).map(|i| v[(k, i)]).collect();
            let out = pcg_solve(a, p, &rhs, cfg)?;
            out.report.require_converged()?;
            Ok(out.x)
        })
        .collect::<Result<_>>()?;
    Ok(DenseMatrix::from_fn(m, n, |k, i| rows[k][i]))
}

/// Σ_i S_ij Xᵀ[:, i] for column j of S, with `xt` stored m×n.
fn s_col_times(xt: &DenseMatrix, s_t: &SparseRect, j: usize) -> Vec<f64> {
    let mut u = vec![0.0; xt.nrows()];
    let (rows, vals) = s_t.row(j);
    for (&i, &s) in rows.iter().zip(vals) {
        crate::linalg::axpy(s, xt.col_as_slice(i), &mut u);
    }
    u
}

pub fn deterministic_terms(
    model: &FsaModel,
    inputs: &PredictionInputs,
    precond: &dyn Preconditioner,
    cfg: &CgConfig,
) -> Result<DeterministicTerms> {
    let v = model.v();
    let m = model.m();
    // Yᵀ = (Σ̃†⁻¹Vᵀ)ᵀ and Zᵀ = (Σ̃_s⁻¹Vᵀ)ᵀ, both m×n
    let yt = solve_low_rank_rhs(model, precond, v, cfg)?;
    let diag = DiagPrecond::for_model(model)?;
    let zt = solve_low_rank_rhs(&SparsePart(model), &diag, v, cfg)?;
    let vy = v * yt.transpose();
    let mut core = v * zt.transpose();
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (core[(i, j)] + core[(j, i)]);
            core[(i, j)] = s;
            core[(j, i)] = s;
        }
        core[(i, i)] += 1.0;
    }
    let l_core = Cholesky::new(core.as_ref(), "predictive variance core I + VΣ̃_s⁻¹Vᵀ")?;
    let vp = &inputs.v_p;
    let rows: Vec<(f64, f64, f64)> = (0..inputs.n_p())
        .into_par_iter()
        .map(|j| {
            let vpj = vp.col_as_slice(j);
            let mut t = vec![0.0; m];
            mat_vec(&vy, vpj, &mut t);
            let d1 = dot(vpj, &t);
            let d2 = dot(&s_col_times(&yt, &inputs.s_t, j), vpj);
            let u = l_core.solve_lower_vec(&s_col_times(&zt, &inputs.s_t, j));
            (d1, d2, dot(&u, &u))
        })
        .collect();
    Ok(DeterministicTerms {
        d1: rows.iter().map(|r| r.0).collect(),
        d2: rows.iter().map(|r| r.1).collect(),
        d3: rows.iter().map(|r| r.2).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimVarConfig {
    pub num_probes: usize,
    /// Use diag(Σ̃_s) as an elementwise control variate for D_ℓ.
    pub cv: bool,
    pub seed: u64,
    pub cg: CgConfig,
}

impl Default for SimVarConfig {
    fn default() -> Self {
        Self {
            num_probes: 500,
            cv: false,
            seed: 0,
            cg: CgConfig::default(),
        }
    }
}

fn assemble(model: &FsaModel, det: &DeterministicTerms, corr: &[f64]) -> (Vec<f64>, usize) {
    let prior = model.params.sigma1_2 + model.params.sigma2;
    let floor = CLAMP_FRACTION * model.params.sigma2;
    let mut clamped = 0;
    let var = (0..corr.len())
        .map(|j| {
            let v = prior - det.d1[j] - 2.0 * det.d2[j] + det.d3[j] - corr[j];
            if v < floor {
                clamped += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} predictive variances fell below the floor and were clamped");
    }
    (var, clamped)
}

/// Per-probe samples zᵢ ∘ (Sᵀ Σ̃_s⁻¹ S zᵢ) and, with `cv`, the control samples
/// zᵢ ∘ (Sᵀ D_s⁻¹ S zᵢ).
fn correction_samples(
    model: &FsaModel,
    inputs: &PredictionInputs,
    cfg: &SimVarConfig,
) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
    let n = model.n();
    let np = inputs.n_p();
    let diag = DiagPrecond::for_model(model)?;
    let sparse = SparsePart(model);
    let target = stochastic_diag_samples(
        |z| {
            let mut sz = vec![0.0; n];
            inputs.s.matvec(z, &mut sz);
            let out = pcg_solve(&sparse, &diag, &sz, &cfg.cg)?;
            out.report.require_converged()?;
            let mut r = vec![0.0; np];
            inputs.s_t.matvec(&out.x, &mut r);
            Ok(r)
        },
        np,
        cfg.num_probes,
        cfg.seed,
    )?;
    if !cfg.cv {
        return Ok((target, None));
    }
    let d = diag.diag();
    let control = stochastic_diag_samples(
        |z| {
            let mut sz = vec![0.0; n];
            inputs.s.matvec(z, &mut sz);
            sz.iter_mut().zip(d).for_each(|(x, di)| *x /= di);
            let mut r = vec![0.0; np];
            inputs.s_t.matvec(&sz, &mut r);
            Ok(r)
        },
        np,
        cfg.num_probes,
        cfg.seed,
    )?;
    Ok((target, Some(control)))
}

/// Elementwise control-variate combination with weights
/// ĉ = Σᵢ(aᵢ − ā)∘bᵢ ⊘ Σᵢ bᵢ², ĉ = 1 where the denominator vanishes.
fn combine_elementwise(target: &[Vec<f64>], control: &[Vec<f64>], exact_control: &[f64]) -> Vec<f64> {
    let l = target.len() as f64;
    let np = exact_control.len();
    let mean_a: Vec<f64> = (0..np).map(|j| target.iter().map(|a| a[j]).sum::<f64>() / l).collect();
    (0..np)
        .map(|j| {
            let num: f64 = target.iter().zip(control).map(|(a, b)| (a[j] - mean_a[j]) * b[j]).sum();
            let den: f64 = control.iter().map(|b| b[j] * b[j]).sum();
            let c = if den > 0.0 { num / den } else { 1.0 };
            let mean_b = control.iter().map(|b| b[j]).sum::<f64>() / l;
            mean_a[j] - c * mean_b + c * exact_control[j]
        })
        .collect()
}

/// Simulation-based predictive variances. D₁–D₃ come from PCG solves with
/// `precond` (for Σ̃†) and the diagonal preconditioner (for Σ̃_s); the
/// remaining diagonal is estimated from Rademacher probes.
pub fn predict_var_sim(
    model: &FsaModel,
    inputs: &PredictionInputs,
    precond: &dyn Preconditioner,
    cfg: &SimVarConfig,
) -> Result<VarOutput> {
    if cfg.num_probes == 0 {
        return Err(GpError::Config("simulation needs at least one probe".into()));
    }
    let det = deterministic_terms(model, inputs, precond, &cfg.cg)?;
    let corr = correction_estimate(model, inputs, cfg)?;
    let (var, clamped) = assemble(model, &det, &corr);
    Ok(VarOutput {
        var,
        method: VarMethod::Simulation,
        num_probes: cfg.num_probes,
        clamped,
    })
}

/// Stochastic estimate of diag(Sᵀ Σ̃_s⁻¹ S).
pub fn correction_estimate(model: &FsaModel, inputs: &PredictionInputs, cfg: &SimVarConfig) -> Result<Vec<f64>> {
    let (target, control) = correction_samples(model, inputs, cfg)?;
    Ok(match control {
        None => {
            let l = target.len() as f64;
            (0..inputs.n_p()).map(|j| target.iter().map(|a| a[j]).sum::<f64>() / l).collect()
        }
        Some(control) => {
            let d = model.sparse_diag();
            let exact: Vec<f64> = (0..inputs.n_p())
                .map(|j| {
                    let (rows, vals) = inputs.s_t.row(j);
                    rows.iter().zip(vals).map(|(&i, &s)| s * s / d[i]).sum()
                })
                .collect();
            combine_elementwise(&target, &control, &exact)
        }
    })
}

/// Lanczos plug-in diag(Sᵀ Q T⁻¹ Qᵀ S) for diag(Sᵀ Σ̃_s⁻¹ S) with `k` steps
/// from a Gaussian start vector; D₁–D₃ as in the simulation method.
pub fn predict_var_lanczos(
    model: &FsaModel,
    inputs: &PredictionInputs,
    precond: &dyn Preconditioner,
    k: usize,
    cg: &CgConfig,
    seed: u64,
) -> Result<VarOutput> {
    let det = deterministic_terms(model, inputs, precond, cg)?;
    let (corr, steps) = lanczos_correction(model, inputs, k, seed)?;
    let (var, clamped) = assemble(model, &det, &corr);
    Ok(VarOutput {
        var,
        method: VarMethod::Lanczos,
        num_probes: steps,
        clamped,
    })
}

pub fn lanczos_correction(model: &FsaModel, inputs: &PredictionInputs, k: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let np = inputs.n_p();
    if k == 0 {
        return Ok((vec![0.0; np], 0));
    }
    let init = gaussian_vec(&mut stream(seed, 0), model.n());
    let (q, t) = lanczos(&SparsePart(model), &init, k, true)?;
    let qt = q.transpose().to_owned();
    let lt = Cholesky::new(t.to_dense().as_ref(), "Lanczos tridiagonal")?;
    let corr = (0..np)
        .into_par_iter()
        .map(|j| {
            let mut u = s_col_times(&qt, &inputs.s_t, j);
            lt.solve_lower_in_place(MatMut::from_column_major_slice_mut(&mut u, t.dim(), 1));
            dot(&u, &u)
        })
        .collect();
    Ok((corr, t.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::model::tests::{instance, uniform};
    use crate::inducing::InducingSet;
    use crate::kernels::{cross_cov, distance_matrix, CovParams, KernelSpec, TaperSpec};
    use crate::precond::FitcPrecond;

    /// Dense Σ†_nnp built straight from kernel and taper evaluations.
    fn dense_cross(model: &FsaModel, lp: &LocationSet) -> DenseMatrix {
        let cnp = cross_cov(&model.locs, lp, &model.kernel, &model.params).unwrap();
        let cmn = cross_cov(&model.inducing.locs, &model.locs, &model.kernel, &model.params).unwrap();
        let cmp = cross_cov(&model.inducing.locs, lp, &model.kernel, &model.params).unwrap();
        let inv_m = model.chol_m().inverse();
        let low = cmn.transpose() * &inv_m * &cmp;
        let d = distance_matrix(&model.locs, lp).unwrap();
        DenseMatrix::from_fn(model.n(), lp.len(), |i, j| {
            let dist = d[(i, j)];
            let t = if dist < model.taper.gamma { model.taper.value(dist) } else { 0.0 };
            low[(i, j)] + (cnp[(i, j)] - low[(i, j)]) * t
        })
    }

    fn dense_var(model: &FsaModel, lp: &LocationSet) -> Vec<f64> {
        let c = dense_cross(model, lp);
        let ch = Cholesky::new(model.to_dense().as_ref(), "oracle").unwrap();
        let mut sol = c.clone();
        ch.solve_in_place(sol.as_mut());
        (0..lp.len())
            .map(|j| model.params.sigma1_2 + model.params.sigma2 - dot(c.col_as_slice(j), sol.col_as_slice(j)))
            .collect()
    }

    fn tight() -> CgConfig {
        CgConfig {
            tol: 1e-11,
            max_iter: 2000,
            ..CgConfig::default()
        }
    }

    #[test]
    fn mean_matches_dense_oracle_and_backends_agree() {
        let model = instance(300, 20, 0.1, 21);
        let lp = uniform(100, 99);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let y: Vec<f64> = (0..300).map(|i| (i as f64 * 0.21).sin()).collect();
        let exact = predict_mean(&model, &inputs, &y, None, Backend::Exact).unwrap();
        let ch = Cholesky::new(model.to_dense().as_ref(), "oracle").unwrap();
        let alpha = ch.solve_vec(&y);
        let c = dense_cross(&model, &lp);
        let mut want = vec![0.0; 100];
        mat_t_vec(&c, &alpha, &mut want);
        for (a, b) in exact.mean.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
        let p = FitcPrecond::for_model(&model).unwrap();
        let cfg = CgConfig {
            tol: 1e-6,
            ..CgConfig::default()
        };
        let it = predict_mean(&model, &inputs, &y, None, Backend::Iterative { precond: &p, cfg: &cfg }).unwrap();
        assert!(it.report.unwrap().converged);
        let ynorm = crate::linalg::norm2(&y);
        for (a, b) in it.mean.iter().zip(&exact.mean) {
            assert!((a - b).abs() <= 10.0 * cfg.tol * ynorm);
        }
    }

    #[test]
    fn mean_with_zero_residual_is_linear_predictor() {
        let base = instance(80, 8, 0.1, 3);
        let params = base.params.clone().with_beta(vec![2.0, -1.0]).unwrap();
        let model = base.reparameterize(&params).unwrap();
        let x = DenseMatrix::from_fn(80, 2, |i, j| if j == 0 { 1.0 } else { model.locs.point(i)[0] });
        let y: Vec<f64> = (0..80).map(|i| 2.0 - x[(i, 1)]).collect();
        let lp = uniform(10, 5);
        let xp = DenseMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { lp.point(i)[0] });
        let inputs = PredictionInputs::new(&model, &lp, Some(xp.clone())).unwrap();
        let mean = predict_mean(&model, &inputs, &y, Some(&x), Backend::Exact).unwrap().mean;
        for i in 0..10 {
            assert!((mean[i] - (2.0 - xp[(i, 1)])).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_in_small_nugget_limit() {
        let locs = uniform(100, 4);
        let params = CovParams::new(1e-8, 1.0, 0.2).unwrap();
        let ind = InducingSet::from_indices(&locs, (0..10).collect()).unwrap();
        let model = FsaModel::assemble(&locs, &ind, &params, &KernelSpec::default(), &TaperSpec::wendland2(0.1).unwrap()).unwrap();
        let y: Vec<f64> = (0..100).map(|i| (i as f64).cos()).collect();
        let lp = locs.subset(&[17, 42]).unwrap();
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let mean = predict_mean(&model, &inputs, &y, None, Backend::Exact).unwrap().mean;
        assert!((mean[0] - y[17]).abs() < 1e-4);
        assert!((mean[1] - y[42]).abs() < 1e-4);
    }

    #[test]
    fn exact_variance_matches_dense_and_prior_far_away() {
        let model = instance(300, 20, 0.1, 8);
        let lp = uniform(100, 31);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let ex = ExactFsa::new(&model).unwrap();
        let var = predict_var_exact(&ex, &inputs).unwrap().var;
        let want = dense_var(&model, &lp);
        for (a, b) in var.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8);
        }
        let far = LocationSet::new(vec![1e6, 1e6], 2).unwrap();
        let inputs = PredictionInputs::new(&model, &far, None).unwrap();
        let v = predict_var_exact(&ex, &inputs).unwrap().var;
        assert_eq!(v[0], model.params.sigma1_2 + model.params.sigma2);
    }

    #[test]
    fn simulation_is_deterministic_without_taper_pairs() {
        let locs = uniform(150, 6);
        let params = CovParams::new(0.3, 1.2, 0.15).unwrap();
        let ind = InducingSet::from_indices(&locs, (0..12).collect()).unwrap();
        let model = FsaModel::assemble(&locs, &ind, &params, &KernelSpec::default(), &TaperSpec::wendland2(1e-9).unwrap()).unwrap();
        let lp = uniform(40, 77);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        assert_eq!(inputs.sigma_s_cross().nnz(), 0);
        let p = FitcPrecond::for_model(&model).unwrap();
        let mut cfg = SimVarConfig {
            num_probes: 3,
            cg: tight(),
            ..SimVarConfig::default()
        };
        let a = predict_var_sim(&model, &inputs, &p, &cfg).unwrap().var;
        cfg.seed = 99;
        let b = predict_var_sim(&model, &inputs, &p, &cfg).unwrap().var;
        assert_eq!(a, b);
        let ex = predict_var_exact(&ExactFsa::new(&model).unwrap(), &inputs).unwrap().var;
        for (x, y) in a.iter().zip(&ex) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn simulation_converges_to_exact() {
        let model = instance(200, 15, 0.15, 14);
        let lp = uniform(100, 15);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let exact = predict_var_exact(&ExactFsa::new(&model).unwrap(), &inputs).unwrap().var;
        let p = FitcPrecond::for_model(&model).unwrap();
        let cfg = SimVarConfig {
            num_probes: 20_000,
            cg: tight(),
            seed: 3,
            ..SimVarConfig::default()
        };
        let det = deterministic_terms(&model, &inputs, &p, &cfg.cg).unwrap();
        let (samples, _) = correction_samples(&model, &inputs, &cfg).unwrap();
        let (var, _) = assemble(&model, &det, &correction_estimate(&model, &inputs, &cfg).unwrap());
        let l = samples.len() as f64;
        for j in 0..100 {
            let m = samples.iter().map(|s| s[j]).sum::<f64>() / l;
            let sd = (samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (l - 1.0)).sqrt();
            let se = sd / l.sqrt();
            assert!((var[j] - exact[j]).abs() <= 4.0 * se + 1e-9, "{j}: {} vs {} (se {se})", var[j], exact[j]);
        }
    }

    #[test]
    fn control_variate_reduces_entrywise_variance() {
        let model = instance(200, 15, 0.15, 17);
        let lp = uniform(60, 18);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let reps = 60;
        let (mut plain, mut with_cv) = (vec![Vec::new(); 60], vec![Vec::new(); 60]);
        for r in 0..reps {
            let mut cfg = SimVarConfig {
                num_probes: 50,
                cg: tight(),
                seed: 1000 + r,
                cv: false,
            };
            let a = correction_estimate(&model, &inputs, &cfg).unwrap();
            cfg.cv = true;
            let b = correction_estimate(&model, &inputs, &cfg).unwrap();
            for j in 0..60 {
                plain[j].push(a[j]);
                with_cv[j].push(b[j]);
            }
        }
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let better = (0..60).filter(|&j| var(&with_cv[j]) <= var(&plain[j])).count();
        assert!(better as f64 >= 0.7 * 60.0, "{better}/60");
    }

    #[test]
    fn full_lanczos_recovers_exact_variances() {
        let model = instance(150, 10, 0.15, 23);
        let lp = uniform(30, 24);
        let inputs = PredictionInputs::new(&model, &lp, None).unwrap();
        let exact = predict_var_exact(&ExactFsa::new(&model).unwrap(), &inputs).unwrap().var;
        let p = FitcPrecond::for_model(&model).unwrap();
        let out = predict_var_lanczos(&model, &inputs, &p, 150, &tight(), 1).unwrap();
        for (a, b) in out.var.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let none = predict_var_lanczos(&model, &inputs, &p, 0, &tight(), 1).unwrap();
        for (a, b) in none.var.iter().zip(&exact) {
            assert!(*a >= *b - 1e-9);
        }
    }
}
