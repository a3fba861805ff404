use rayon::prelude::*;

use super::pcg::{pcg_solve, SolveReport};
use super::{CgConfig, ProbeDist};
use crate::error::{GpError, Result};
use crate::kernels::Param;
use crate::linalg::{dot, TridiagMatrix};
use crate::operator::LinearOperator;
use crate::precond::Preconditioner;
use crate::random::{gaussian_vec, rademacher_vec, stream};

/// Probe vectors together with the solves that every later trace estimate reuses.
#[derive(Clone, Debug, Default)]
pub struct ProbeSet {
    pub z: Vec<Vec<f64>>,
    /// A⁻¹ zᵢ (CG solution).
    pub a_inv_z: Vec<Vec<f64>>,
    /// P⁻¹ zᵢ
    pub p_inv_z: Vec<Vec<f64>>,
}

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.z.is_empty() || self.a_inv_z.len() != self.z.len() || self.p_inv_z.len() != self.z.len() {
            return Err(GpError::Config(format!(
                "mismatched probe set: {} probes, {} A-solves, {} P-solves",
                self.z.len(),
                self.a_inv_z.len(),
                self.p_inv_z.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SlqOutput {
    pub logdet: f64,
    /// n · e₁ᵀ log(T̃ᵢ) e₁ for every probe.
    pub per_probe: Vec<f64>,
    pub logdet_precond: f64,
    pub probes: ProbeSet,
    pub reports: Vec<SolveReport>,
}

impl SlqOutput {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    pub fn mean_iterations(&self) -> f64 {
        self.reports.iter().map(|r| r.iterations as f64).sum::<f64>() / self.reports.len().max(1) as f64
    }
}

/// Draw `cfg.num_probes` probes; probe i comes from stream `(cfg.seed, i)`.
pub fn generate_probes(p: &dyn Preconditioner, cfg: &CgConfig) -> Vec<Vec<f64>> {
    let n = p.dim();
    (0..cfg.num_probes)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            match cfg.probe_dist {
                ProbeDist::Gaussian => gaussian_vec(&mut rng, n),
                ProbeDist::Rademacher => rademacher_vec(&mut rng, n),
                ProbeDist::PrecondGaussian => p.sample(&mut rng),
            }
        })
        .collect()
}

/// `e₁ᵀ log(T) e₁`; fails on a nonpositive Ritz value.
pub fn log_quadrature(t: &TridiagMatrix) -> Result<f64> {
    if t.dim() == 0 {
        return Ok(0.0);
    }
    let (vals, first) = t.eigen_first_components()?;
    if let Some(bad) = vals.iter().find(|&&l| !(l > 0.0)) {
        return Err(GpError::NotPositiveDefinite {
            stage: format!("SLQ Ritz value {bad:e}"),
        });
    }
    Ok(vals.iter().zip(&first).map(|(l, u)| u * u * l.ln()).sum())
}

/// log det A ≈ (n/ℓ) Σᵢ e₁ᵀ log(T̃ᵢ) e₁ + log det P with T̃ᵢ from PCG on zᵢ.
pub fn slq_logdet(a: &dyn LinearOperator, p: &dyn Preconditioner, cfg: &CgConfig) -> Result<SlqOutput> {
    cfg.validate()?;
    let n = a.dim() as f64;
    let z = generate_probes(p, cfg);
    let runs: Vec<(Vec<f64>, Vec<f64>, f64, SolveReport)> = z
        .par_iter()
        .map(|zi| {
            let out = pcg_solve(a, p, zi, cfg)?;
            let quad = n * log_quadrature(&out.tridiag)?;
            Ok((out.x, p.solve_vec(zi), quad, out.report))
        })
        .collect::<Result<_>>()?;
    let mut probes = ProbeSet {
        z,
        ..ProbeSet::default()
    };
    let mut per_probe = Vec::with_capacity(runs.len());
    let mut reports = Vec::with_capacity(runs.len());
    for (x, pz, q, rep) in runs {
        probes.a_inv_z.push(x);
        probes.p_inv_z.push(pz);
        per_probe.push(q);
        reports.push(rep);
    }
    let logdet_precond = p.logdet();
    let logdet = per_probe.iter().sum::<f64>() / per_probe.len() as f64 + logdet_precond;
    Ok(SlqOutput {
        logdet,
        per_probe,
        logdet_precond,
        probes,
        reports,
    })
}

/// Per-probe samples (A⁻¹zᵢ)ᵀ(∂A P⁻¹zᵢ); unbiased for Tr(A⁻¹∂A) when zᵢ ~ N(0, P).
pub fn ste_grad_trace_samples<F>(probes: &ProbeSet, d_apply: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    probes.check()?;
    probes
        .a_inv_z
        .par_iter()
        .zip(&probes.p_inv_z)
        .map(|(s, pz)| {
            let mut t = vec![0.0; pz.len()];
            d_apply(pz, &mut t)?;
            Ok(dot(s, &t))
        })
        .collect()
}

pub fn ste_grad_trace<F>(probes: &ProbeSet, d_apply: F) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let s = ste_grad_trace_samples(probes, d_apply)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Control samples (P⁻¹zᵢ)ᵀ(∂P P⁻¹zᵢ) with expectation Tr(P⁻¹∂P).
pub fn control_samples(probes: &ProbeSet, p: &dyn Preconditioner, wrt: Param) -> Result<Vec<f64>> {
    probes.check()?;
    probes
        .p_inv_z
        .par_iter()
        .map(|pz| {
            let mut t = vec![0.0; pz.len()];
            p.deriv_apply(wrt, pz, &mut t)?;
            Ok(dot(pz, &t))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CvMode {
    None,
    One,
    #[default]
    Optimal,
}

impl CvMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(Self::None),
            "one" | "1" => Ok(Self::One),
            "optimal" | "opt" => Ok(Self::Optimal),
            _ => Err(GpError::Config(format!("unknown control-variate mode '{s}'"))),
        }
    }
}

/// Weight ĉ = Σᵢ(aᵢ − ā)bᵢ / Σᵢ bᵢ², falling back to 1 when Σ bᵢ² = 0.
pub fn c_opt(target: &[f64], control: &[f64]) -> f64 {
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let num: f64 = target.iter().zip(control).map(|(a, b)| (a - mean) * b).sum();
    let den: f64 = control.iter().map(|b| b * b).sum();
    if den > 0.0 && num.is_finite() {
        num / den
    } else {
        log::warn!("control-variate weight has zero denominator; using c = 1");
        1.0
    }
}

/// mean(a − ĉ b) + ĉ · exact
pub fn cv_combine(target: &[f64], control: &[f64], exact_control: f64, mode: CvMode) -> f64 {
    let c = match mode {
        CvMode::None => return target.iter().sum::<f64>() / target.len() as f64,
        CvMode::One => 1.0,
        CvMode::Optimal => c_opt(target, control),
    };
    let l = target.len() as f64;
    target.iter().zip(control).map(|(a, b)| a - c * b).sum::<f64>() / l + c * exact_control
}

/// STE of Tr(A⁻¹∂A) with the preconditioner as control variate.
pub fn ste_grad_trace_cv<F>(
    probes: &ProbeSet,
    d_apply: F,
    p: &dyn Preconditioner,
    wrt: Param,
    mode: CvMode,
) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let a = ste_grad_trace_samples(probes, d_apply)?;
    if mode == CvMode::None {
        return Ok(cv_combine(&a, &[], 0.0, mode));
    }
    let b = control_samples(probes, p, wrt)?;
    Ok(cv_combine(&a, &b, p.grad_logdet_trace(wrt)?, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::{model::tests::instance, ExactFsa, FsaDerivatives};
    use crate::operator::DiagOperator;
    use crate::precond::{FitcPrecond, IdentityPrecond};

    fn cfg(probes: usize, seed: u64, dist: ProbeDist) -> CgConfig {
        CgConfig {
            tol: 1e-8,
            max_iter: 1000,
            num_probes: probes,
            probe_dist: dist,
            seed,
        }
    }

    fn mean_sd(x: &[f64]) -> (f64, f64) {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        (m, v.sqrt())
    }

    #[test]
    fn trivial_operators() {
        let id = IdentityPrecond { n: 10 };
        let out = slq_logdet(&DiagOperator(vec![1.0; 10]), &id, &cfg(3, 1, ProbeDist::Gaussian)).unwrap();
        assert_eq!(out.logdet, 0.0);
        let c: f64 = 2.5;
        let out = slq_logdet(&DiagOperator(vec![c; 10]), &id, &cfg(3, 1, ProbeDist::Rademacher)).unwrap();
        assert!((out.logdet - 10.0 * c.ln()).abs() < 1e-12);
        // dA = I with A = P = I gives (1/ℓ)Σ zᵢᵀzᵢ
        let set = &out.probes;
        let want: f64 = set.z.iter().map(|z| dot(z, z)).sum::<f64>() / set.len() as f64;
        let got = ste_grad_trace(set, |x, o| {
            o.copy_from_slice(x);
            Ok(())
        })
        .unwrap();
        assert!((got - want / c).abs() < 1e-12);
    }

    #[test]
    fn derivative_equal_to_operator_gives_n() {
        let model = instance(120, 8, 0.1, 3);
        let p = FitcPrecond::for_model(&model).unwrap();
        let out = slq_logdet(&model, &p, &cfg(4, 9, ProbeDist::PrecondGaussian)).unwrap();
        let samples = ste_grad_trace_samples(&out.probes, |x, o| {
            crate::operator::LinearOperator::apply(&model, x, o);
            Ok(())
        })
        .unwrap();
        // zᵀA⁻¹ A P⁻¹ z = zᵀP⁻¹z, exact per probe up to CG tolerance
        for (s, (z, pz)) in samples.iter().zip(out.probes.z.iter().zip(&out.probes.p_inv_z)) {
            assert!((s - dot(z, pz)).abs() < 1e-5 * s.abs());
        }
        let bad = ProbeSet {
            z: out.probes.z.clone(),
            a_inv_z: vec![],
            p_inv_z: vec![],
        };
        assert!(ste_grad_trace(&bad, |_, _| Ok(())).is_err());
    }

    #[test]
    fn slq_is_unbiased_and_fitc_reduces_variance() {
        let model = instance(300, 20, 0.1, 11);
        let exact = ExactFsa::new(&model).unwrap().logdet();
        let p = FitcPrecond::for_model(&model).unwrap();
        let id = IdentityPrecond { n: 300 };
        let reps = 100;
        let (mut pre, mut raw) = (Vec::new(), Vec::new());
        for r in 0..reps {
            let mut c = cfg(50, 1000 + r, ProbeDist::PrecondGaussian);
            c.tol = 1e-6;
            pre.push(slq_logdet(&model, &p, &c).unwrap().logdet);
            c.probe_dist = ProbeDist::Gaussian;
            raw.push(slq_logdet(&model, &id, &c).unwrap().logdet);
        }
        let (m, sd) = mean_sd(&pre);
        let (mr, sdr) = mean_sd(&raw);
        assert!((m - exact).abs() <= 3.0 * sd / (reps as f64).sqrt(), "{m} vs {exact} (sd {sd})");
        assert!((mr - exact).abs() <= 3.0 * sdr / (reps as f64).sqrt(), "{mr} vs {exact} (sd {sdr})");
        assert!(sd < sdr, "{sd} vs {sdr}");
    }

    #[test]
    fn ste_is_unbiased_and_control_variate_helps() {
        let model = instance(200, 15, 0.1, 13);
        let ex = ExactFsa::new(&model).unwrap();
        let der = FsaDerivatives::new(&model);
        let exact = ex.exact_traces(&der);
        let p = FitcPrecond::for_model(&model).unwrap().with_gradients(&der);
        let mut c = cfg(200, 5, ProbeDist::PrecondGaussian);
        c.tol = 1e-9;
        let out = slq_logdet(&model, &p, &c).unwrap();
        for wrt in Param::ALL {
            let s = ste_grad_trace_samples(&out.probes, |x, o| {
                der.apply(wrt, x, o);
                Ok(())
            })
            .unwrap();
            let (m, sd) = mean_sd(&s);
            let e = exact[wrt.index()];
            assert!((m - e).abs() <= 3.0 * sd / (s.len() as f64).sqrt() + 1e-9, "{wrt:?}: {m} vs {e}");
            let none = ste_grad_trace_cv(&out.probes, |x, o| Ok(der.apply(wrt, x, o)), &p, wrt, CvMode::None).unwrap();
            assert_eq!(none, m);
        }

        // paired variance: optimal control variate vs none over 100 repetitions
        let wrt = Param::Rho;
        let (mut with_cv, mut without) = (Vec::new(), Vec::new());
        for r in 0..100 {
            let mut c = cfg(20, 500 + r, ProbeDist::PrecondGaussian);
            c.tol = 1e-8;
            let out = slq_logdet(&model, &p, &c).unwrap();
            let d = |x: &[f64], o: &mut [f64]| {
                der.apply(wrt, x, o);
                Ok(())
            };
            with_cv.push(ste_grad_trace_cv(&out.probes, d, &p, wrt, CvMode::Optimal).unwrap());
            without.push(ste_grad_trace_cv(&out.probes, d, &p, wrt, CvMode::None).unwrap());
        }
        let (_, a) = mean_sd(&with_cv);
        let (_, b) = mean_sd(&without);
        assert!(a <= b, "{a} vs {b}");
    }

    #[test]
    fn perfect_control_variate_is_exact_with_unit_weight() {
        // P = A: control samples equal target samples, so ĉ = 1 cancels all noise.
        let target = vec![1.0, 4.0, 2.5, 7.0];
        assert_eq!(cv_combine(&target, &target, 3.25, CvMode::One), 3.25);
        let mean = target.iter().sum::<f64>() / 4.0;
        assert_eq!(cv_combine(&target, &target, 3.25, CvMode::None), mean);
        assert_eq!(c_opt(&[1.0, 2.0], &[0.0, 0.0]), 1.0);
    }
}
