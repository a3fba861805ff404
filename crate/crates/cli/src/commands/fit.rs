use std::fmt::Write as _;
use std::path::Path;

use fsagp::estimation::{fit, FitData, FitResult};
use fsagp::kernels::CovParams;
use serde::Deserialize;

use super::{model_setup, write_text};
use crate::config::RunConfig;
use crate::data::{fmt17, Dataset};
use crate::error::{io_err, CliError, CliResult};

/// Everything a later `predict` needs to rebuild the fitted model. Fields
/// written for information only are not read back.
#[derive(Clone, Debug, Deserialize)]
pub struct FitFile {
    pub nu: f64,
    pub m: usize,
    pub inducing: String,
    pub inducing_seed: u64,
    pub taper_gamma: f64,
    pub intercept: bool,
    pub covariates: Vec<String>,
    pub sigma2: f64,
    pub sigma1_2: f64,
    pub rho: f64,
    pub beta: Vec<f64>,
}

impl FitFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> CliResult<CovParams> {
        Ok(CovParams::new(self.sigma2, self.sigma1_2, self.rho)?.with_beta(self.beta.clone())?)
    }
}

fn list(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
    format!("[{}]", parts.join(", "))
}

/// Fits on the rows tagged "train" (all rows without a split column) and
/// writes a TOML result file whose only run-dependent values sit in the
/// trailing `[timing]` table.
pub fn run(cfg: &RunConfig, data_path: &Path, out: &Path) -> CliResult<FitResult> {
    let data = Dataset::read(data_path)?.rows_tagged("train")?;
    let y = data.response(data_path)?.to_vec();
    let x = data.design(cfg.model.intercept);
    let (ind, taper) = model_setup(cfg, &data.locs, cfg.model.m)?;
    let fit_cfg = cfg.fit_config()?;
    let fd = FitData::new(data.locs.clone(), y, x)?;
    let res = fit(&fd, &ind, &cfg.kernel()?, &taper, &fit_cfg)?;

    let p = &res.params;
    let mut s = String::new();
    let covs: Vec<String> = data.covariate_names().iter().map(|n| toml::Value::from(*n).to_string()).collect();
    // writing to a String cannot fail
    let _ = writeln!(s, "backend = \"{}\"", res.backend);
    let _ = writeln!(s, "driver = \"{}\"", cfg.fit.driver);
    let _ = writeln!(s, "precond = \"{}\"", fit_cfg.precond.label());
    let _ = writeln!(s, "n = {}", data.len());
    let _ = writeln!(s, "d = {}", data.locs.dim());
    let _ = writeln!(s, "nu = {}", fmt17(cfg.kernel.nu));
    let _ = writeln!(s, "m = {}", ind.len());
    let _ = writeln!(s, "inducing = \"{}\"", cfg.inducing_method()?.label());
    let _ = writeln!(s, "inducing_seed = {}", cfg.model.inducing_seed);
    let _ = writeln!(s, "taper_gamma = {}", fmt17(taper.gamma));
    let _ = writeln!(s, "intercept = {}", cfg.model.intercept);
    let _ = writeln!(s, "covariates = [{}]", covs.join(", "));
    let _ = writeln!(s, "sigma2 = {}", fmt17(p.sigma2));
    let _ = writeln!(s, "sigma1_2 = {}", fmt17(p.sigma1_2));
    let _ = writeln!(s, "rho = {}", fmt17(p.rho));
    let _ = writeln!(s, "beta = {}", list(&p.beta));
    let _ = writeln!(s, "nll = {}", fmt17(res.nll));
    let _ = writeln!(s, "iterations = {}", res.iterations);
    let _ = writeln!(s, "evaluations = {}", res.evaluations);
    let _ = writeln!(s, "grad_norm = {}", fmt17(res.grad_norm));
    let _ = writeln!(s, "converged = {}", res.converged);
    let _ = writeln!(s, "trace = {}", list(&res.trace));
    let _ = writeln!(s, "\n[timing]\nwall_time_secs = {}", fmt17(res.wall_time_secs));
    write_text(out, &s)?;
    Ok(res)
}
