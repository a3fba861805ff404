//! Run configuration: a TOML file with one table per module plus
//! `section.key=value` overrides from the command line. Unknown keys are
//! rejected at every level.

use std::path::Path;

use fsagp::estimation::{Backend, Driver, FitConfig};
use fsagp::inducing::InducingMethod;
use fsagp::kernels::{CovParams, KernelSpec};
use fsagp::krylov::{CgConfig, CvMode, ProbeDist};
use fsagp::precond::PrecondKind;
use fsagp::vecchia::VecchiaOrdering;
use serde::Deserialize;

use crate::error::{io_err, CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub params: ParamsSection,
    pub model: ModelSection,
    pub cg: CgSection,
    pub fit: FitSection,
    pub predict: PredictSection,
    pub simulate: SimulateSection,
    pub bench: BenchSection,
    pub sweep: SweepSection,
    pub vecchia: VecchiaSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    /// Matérn smoothness: 0.5, 1.5 or 2.5.
    pub nu: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { nu: 1.5 }
    }
}

/// Covariance parameters used to simulate data and as the evaluation point
/// of the benchmarks. Exactly one of `rho` and `effective_range` may be set.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub sigma2: f64,
    pub sigma1_2: f64,
    pub rho: Option<f64>,
    pub effective_range: Option<f64>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            sigma1_2: 1.0,
            rho: None,
            effective_range: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Number of inducing points.
    pub m: usize,
    pub inducing: String,
    pub inducing_seed: u64,
    /// Target average nonzeros per row of the tapered part; ignored when
    /// `taper_gamma` is set.
    pub n_gamma: f64,
    pub taper_gamma: Option<f64>,
    /// Add a column of ones to the covariates.
    pub intercept: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            m: 100,
            inducing: "kmeans++".into(),
            inducing_seed: 0,
            n_gamma: 20.0,
            taper_gamma: None,
            intercept: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgSection {
    pub tol: f64,
    pub max_iter: usize,
    pub num_probes: usize,
    pub probe_dist: String,
    pub seed: u64,
}

impl Default for CgSection {
    fn default() -> Self {
        let c = CgConfig::default();
        Self {
            tol: c.tol,
            max_iter: c.max_iter,
            num_probes: c.num_probes,
            probe_dist: "precond-gaussian".into(),
            seed: c.seed,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub backend: String,
    pub driver: String,
    pub precond: String,
    pub cv: String,
    pub max_evals: usize,
    pub grad_tol: f64,
    pub lbfgs_memory: usize,
    pub variance_floor: f64,
    pub seed: u64,
    /// Starting (σ², σ₁², ρ); derived from the data when absent.
    pub init: Option<[f64; 3]>,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            backend: f.backend.label().into(),
            driver: "lbfgs".into(),
            precond: f.precond.label(),
            cv: "optimal".into(),
            max_evals: f.max_evals,
            grad_tol: f.grad_tol,
            lbfgs_memory: f.lbfgs_memory,
            variance_floor: f.variance_floor,
            seed: f.seed,
            init: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Predictive mean by exact solve ("cholesky") or PCG ("iterative").
    pub mean_backend: String,
    /// "exact", "sim" or "lanczos".
    pub var_method: String,
    pub precond: String,
    pub num_probes: usize,
    pub lanczos_rank: usize,
    pub cv: bool,
    pub seed: u64,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            mean_backend: "cholesky".into(),
            var_method: "exact".into(),
            precond: "fitc".into(),
            num_probes: 500,
            lanczos_rank: 200,
            cv: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// "dense" (exact, n ≤ 20 000) or "vecchia".
    pub method: String,
    pub m_v: usize,
    /// Share of rows tagged "test" in a `split` column; no column when 0.
    pub test_fraction: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 2,
            seed: 0,
            method: "dense".into(),
            m_v: 30,
            test_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub n_gamma: Vec<f64>,
    pub effective_range: Vec<f64>,
    pub preconds: Vec<String>,
    pub seed: u64,
    /// Neighbours of the Vecchia simulator that generates y.
    pub m_v: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n: vec![5000],
            m: vec![200],
            n_gamma: vec![40.0],
            effective_range: vec![0.2],
            preconds: vec!["none".into(), "fitc".into()],
            seed: 0,
            m_v: 30,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n: usize,
    pub m: Vec<usize>,
    pub n_gamma: Vec<f64>,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n: 2000,
            m: vec![50, 100, 200],
            n_gamma: vec![10.0, 20.0, 40.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VecchiaSection {
    pub n: usize,
    pub m_v: Vec<usize>,
    pub num_probes: Vec<usize>,
    pub ordering: String,
    /// Inducing points of the FITC preconditioner.
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for VecchiaSection {
    fn default() -> Self {
        Self {
            n: 1000,
            m_v: vec![10, 30],
            num_probes: vec![5, 20, 50],
            ordering: "random".into(),
            m: 50,
            reps: 10,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads `path` (when given), applies `overrides` of the form
    /// `section.key=value` with TOML values, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_err(p))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.params.rho.is_some() && self.params.effective_range.is_some() {
            return Err(CliError::config("set only one of params.rho and params.effective_range"));
        }
        self.kernel()?;
        self.true_params()?;
        self.inducing_method()?;
        self.cg_config()?.validate()?;
        self.fit_config()?.validate()?;
        PrecondKind::parse(&self.predict.precond)?;
        Backend::parse(&self.predict.mean_backend)?;
        VarMethodArg::parse(&self.predict.var_method)?;
        SimMethod::parse(&self.simulate.method)?;
        VecchiaOrdering::parse(&self.vecchia.ordering)?;
        for p in &self.bench.preconds {
            PrecondKind::parse(p)?;
        }
        if let Some(g) = self.model.taper_gamma {
            if !(g > 0.0) {
                return Err(CliError::config("model.taper_gamma must be positive"));
            }
        } else if !(self.model.n_gamma >= 1.0) {
            return Err(CliError::config("model.n_gamma must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.simulate.test_fraction) {
            return Err(CliError::config("simulate.test_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> CliResult<KernelSpec> {
        Ok(KernelSpec::new(self.kernel.nu)?)
    }

    /// Parameters from `[params]`, the range given directly or through the
    /// effective range (default 0.2).
    pub fn true_params(&self) -> CliResult<CovParams> {
        self.params_with_range(self.params.effective_range)
    }

    /// As [`Self::true_params`] with the effective range replaced.
    pub fn params_with_range(&self, eff: Option<f64>) -> CliResult<CovParams> {
        let p = &self.params;
        let rho = match (eff, p.rho) {
            (Some(e), _) => self.kernel()?.rho_for_effective_range(e),
            (None, Some(r)) => r,
            (None, None) => self.kernel()?.rho_for_effective_range(0.2),
        };
        Ok(CovParams::new(p.sigma2, p.sigma1_2, rho)?)
    }

    pub fn inducing_method(&self) -> CliResult<InducingMethod> {
        Ok(InducingMethod::parse(&self.model.inducing)?)
    }

    pub fn cg_config(&self) -> CliResult<CgConfig> {
        Ok(CgConfig {
            tol: self.cg.tol,
            max_iter: self.cg.max_iter,
            num_probes: self.cg.num_probes,
            probe_dist: ProbeDist::parse(&self.cg.probe_dist)?,
            seed: self.cg.seed,
        })
    }

    pub fn fit_config(&self) -> CliResult<FitConfig> {
        let f = &self.fit;
        Ok(FitConfig {
            backend: Backend::parse(&f.backend)?,
            driver: Driver::parse(&f.driver)?,
            max_evals: f.max_evals,
            grad_tol: f.grad_tol,
            lbfgs_memory: f.lbfgs_memory,
            cg: self.cg_config()?,
            precond: PrecondKind::parse(&f.precond)?,
            cv: CvMode::parse(&f.cv)?,
            seed: f.seed,
            variance_floor: f.variance_floor,
            init: f.init,
            ..FitConfig::default()
        })
    }
}

fn apply_override(table: &mut toml::Table, ov: &str) -> CliResult<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override '{ov}' is not of the form section.key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad override key '{key}'")));
    }
    let raw = raw.trim();
    // parse as a TOML value; bare words fall back to strings
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("nonempty");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarMethodArg {
    Exact,
    Sim,
    Lanczos,
}

impl VarMethodArg {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "cholesky" => Ok(Self::Exact),
            "sim" | "simulation" => Ok(Self::Sim),
            "lanczos" => Ok(Self::Lanczos),
            _ => Err(CliError::config(format!("unknown variance method '{s}' (exact, sim, lanczos)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimMethod {
    Dense,
    Vecchia,
}

impl SimMethod {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" | "cholesky" => Ok(Self::Dense),
            "vecchia" => Ok(Self::Vecchia),
            _ => Err(CliError::config(format!("unknown simulation method '{s}' (dense, vecchia)"))),
        }
    }
}
