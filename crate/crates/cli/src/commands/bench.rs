use std::path::Path;
use std::time::Instant;

use fsagp::fsa::FsaModel;
use fsagp::kernels::{gamma_for_realized_nnz, TaperSpec};
use fsagp::krylov::pcg_solve;
use fsagp::precond::{build_for_model, PrecondKind};
use fsagp::inducing::select;
use fsagp::simulate::{simulate_gp_vecchia, uniform_locations};

use super::{markdown, write_table};
use crate::config::RunConfig;
use crate::data::fmt17;
use crate::error::CliResult;

pub const HEADER: [&str; 11] = [
    "effective_range",
    "n",
    "m",
    "n_gamma",
    "gamma",
    "precond",
    "iterations",
    "converged",
    "residual",
    "setup_secs",
    "solve_secs",
];

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub effective_range: f64,
    pub n: usize,
    pub m: usize,
    pub n_gamma: f64,
    pub gamma: f64,
    pub precond: String,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub setup_secs: f64,
    pub solve_secs: f64,
}

impl BenchRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.effective_range.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            self.n_gamma.to_string(),
            fmt17(self.gamma),
            self.precond.clone(),
            self.iterations.to_string(),
            self.converged.to_string(),
            fmt17(self.residual),
            format!("{:.6}", self.setup_secs),
            format!("{:.6}", self.solve_secs),
        ]
    }
}

/// PCG iterations and timings for Σ̃†⁻¹y over the grid
/// effective range × n × m × n_γ × preconditioner. Returns the rows and a
/// markdown rendering.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<(Vec<BenchRow>, String)> {
    let b = &cfg.bench;
    let kernel = cfg.kernel()?;
    let cg = cfg.cg_config()?;
    let kinds: Vec<PrecondKind> = b.preconds.iter().map(|s| PrecondKind::parse(s)).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &eff in &b.effective_range {
        let params = cfg.params_with_range(Some(eff))?;
        for &n in &b.n {
            let locs = uniform_locations(n, 2, b.seed)?;
            let y = simulate_gp_vecchia(&locs, &params, &kernel, b.m_v, b.seed + 1)?;
            for &m in &b.m {
                let ind = select(&locs, m, cfg.inducing_method()?, cfg.model.inducing_seed)?;
                for &n_gamma in &b.n_gamma {
                    let gamma = gamma_for_realized_nnz(&locs, n_gamma)?;
                    let model = FsaModel::assemble(&locs, &ind, &params, &kernel, &TaperSpec::wendland2(gamma)?)?;
                    for kind in &kinds {
                        let t0 = Instant::now();
                        let p = build_for_model(&model, *kind, None)?;
                        let setup_secs = t0.elapsed().as_secs_f64();
                        let t1 = Instant::now();
                        let sol = pcg_solve(&model, p.as_ref(), &y, &cg)?;
                        let solve_secs = t1.elapsed().as_secs_f64();
                        if !sol.report.converged {
                            log::warn!("{} did not converge for n = {n}, m = {m}", kind.label());
                        }
                        rows.push(BenchRow {
                            effective_range: eff,
                            n,
                            m,
                            n_gamma,
                            gamma,
                            precond: kind.label(),
                            iterations: sol.report.iterations,
                            converged: sol.report.converged,
                            residual: sol.report.residual,
                            setup_secs,
                            solve_secs,
                        });
                    }
                }
            }
        }
    }
    let fields: Vec<Vec<String>> = rows.iter().map(BenchRow::fields).collect();
    write_table(out, &HEADER, &fields)?;
    Ok((rows, markdown(&HEADER, &fields)))
}
