use std::path::Path;
use std::time::Instant;

use fsagp::inducing::select;
use fsagp::kernels::{CovParams, KernelSpec, LocationSet};
use fsagp::krylov::CgConfig;
use fsagp::linalg::{dot, Cholesky};
use fsagp::simulate::{simulate_gp, simulate_gp_vecchia, uniform_locations, DENSE_SIM_LIMIT};
use fsagp::vecchia::{
    build_vecchia, solve_vecchia_system, vecchia_nll_gaussian, DiagW, NllMode, VecchiaOrdering, VecchiaPrecondKind,
    VecchiaSolvePath,
};

use super::write_table;
use crate::config::RunConfig;
use crate::data::fmt17;
use crate::error::CliResult;

/// Largest n for the dense latent-NLL reference.
const DENSE_REFERENCE_LIMIT: usize = 3000;

pub const HEADER: [&str; 9] = [
    "m_v",
    "task",
    "precond",
    "num_probes",
    "nll_mean",
    "nll_sd",
    "rmse_vs_dense",
    "iterations",
    "secs",
];

#[derive(Clone, Debug, Default)]
pub struct VecchiaRow {
    pub m_v: usize,
    pub task: &'static str,
    pub precond: String,
    pub num_probes: usize,
    pub nll_mean: Option<f64>,
    pub nll_sd: Option<f64>,
    pub rmse_vs_dense: Option<f64>,
    pub iterations: Option<usize>,
    pub secs: f64,
}

impl VecchiaRow {
    fn fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        vec![
            self.m_v.to_string(),
            self.task.to_string(),
            self.precond.clone(),
            self.num_probes.to_string(),
            opt(self.nll_mean),
            opt(self.nll_sd),
            opt(self.rmse_vs_dense),
            self.iterations.map(|i| i.to_string()).unwrap_or_default(),
            format!("{:.6}", self.secs),
        ]
    }
}

/// NLL of y under N(0, Σ_V + σ²I) by dense Cholesky.
fn dense_latent_nll(
    locs: &LocationSet,
    y: &[f64],
    params: &CovParams,
    kernel: &KernelSpec,
    m_v: usize,
    ord: VecchiaOrdering,
) -> CliResult<f64> {
    let v = build_vecchia(locs, params, kernel, m_v, ord)?;
    let mut cov = Cholesky::new(v.precision_dense().as_ref(), "Vecchia precision")?.inverse();
    for i in 0..y.len() {
        cov[(i, i)] += params.sigma2;
    }
    let ch = Cholesky::new(cov.as_ref(), "Vecchia marginal covariance")?;
    let quad = dot(y, &ch.solve_vec(y));
    Ok(0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + ch.logdet() + quad))
}

/// Vecchia comparisons per m_v: the observable-model NLL, latent-model SLQ
/// NLLs with FITC and observable-Vecchia preconditioners over `num_probes`,
/// and PCG iterations of the two ways of solving (Σ_V⁻¹ + W)x = y.
pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<Vec<VecchiaRow>> {
    let vc = &cfg.vecchia;
    let params = cfg.true_params()?;
    let kernel = cfg.kernel()?;
    let ord = VecchiaOrdering::parse(&vc.ordering)?;
    let base_cg = cfg.cg_config()?;
    let locs = uniform_locations(vc.n, 2, vc.seed)?;
    let y = if vc.n <= DENSE_SIM_LIMIT {
        simulate_gp(&locs, &params, &kernel, vc.seed + 1)?
    } else {
        simulate_gp_vecchia(&locs, &params, &kernel, 30, vc.seed + 1)?
    };
    let ind = select(&locs, vc.m, cfg.inducing_method()?, cfg.model.inducing_seed)?;
    let w = DiagW::gaussian(vc.n, params.sigma2)?;
    let mut rows = Vec::new();
    for &m_v in &vc.m_v {
        let t = Instant::now();
        let obs = vecchia_nll_gaussian(&locs, &y, None, &params, &kernel, m_v, ord, &NllMode::ObservableDirect)?;
        rows.push(VecchiaRow {
            m_v,
            task: "observable_nll",
            nll_mean: Some(obs.nll),
            secs: t.elapsed().as_secs_f64(),
            ..Default::default()
        });

        let dense = if vc.n <= DENSE_REFERENCE_LIMIT {
            Some(dense_latent_nll(&locs, &y, &params, &kernel, m_v, ord)?)
        } else {
            None
        };
        let kinds = [
            ("fitc", VecchiaPrecondKind::Fitc(&ind)),
            ("vecchia", VecchiaPrecondKind::ObsVecchia { m_v }),
        ];
        for (label, kind) in kinds {
            for &l in &vc.num_probes {
                let t = Instant::now();
                let mut vals = Vec::with_capacity(vc.reps);
                for r in 0..vc.reps {
                    let mode = NllMode::LatentIterative {
                        precond: kind,
                        cfg: CgConfig {
                            num_probes: l,
                            seed: base_cg.seed + r as u64,
                            ..base_cg.clone()
                        },
                    };
                    vals.push(vecchia_nll_gaussian(&locs, &y, None, &params, &kernel, m_v, ord, &mode)?.nll);
                }
                let k = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / k;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
                let rmse = dense.map(|d| (vals.iter().map(|v| (v - d).powi(2)).sum::<f64>() / k).sqrt());
                rows.push(VecchiaRow {
                    m_v,
                    task: "latent_nll",
                    precond: label.into(),
                    num_probes: l,
                    nll_mean: Some(mean),
                    nll_sd: Some(sd),
                    rmse_vs_dense: rmse,
                    secs: t.elapsed().as_secs_f64(),
                    ..Default::default()
                });
            }
        }
        if let Some(d) = dense {
            rows.push(VecchiaRow {
                m_v,
                task: "latent_nll_dense",
                nll_mean: Some(d),
                ..Default::default()
            });
        }

        let model = build_vecchia(&locs, &params, &kernel, m_v, ord)?;
        let t = Instant::now();
        let (_, rep) = solve_vecchia_system(&model, &w, &y, VecchiaSolvePath::Precision, &base_cg)?;
        rows.push(VecchiaRow {
            m_v,
            task: "solve_precision",
            precond: "jacobi".into(),
            iterations: Some(rep.iterations),
            secs: t.elapsed().as_secs_f64(),
            ..Default::default()
        });
        for (label, kind) in kinds {
            let t = Instant::now();
            let p = kind.build(&locs, &params, &kernel, &w, ord)?;
            let (_, rep) = solve_vecchia_system(&model, &w, &y, VecchiaSolvePath::Covariance(p.as_ref()), &base_cg)?;
            rows.push(VecchiaRow {
                m_v,
                task: "solve_covariance",
                precond: label.into(),
                iterations: Some(rep.iterations),
                secs: t.elapsed().as_secs_f64(),
                ..Default::default()
            });
        }
    }
    let fields: Vec<Vec<String>> = rows.iter().map(VecchiaRow::fields).collect();
    write_table(out, &HEADER, &fields)?;
    Ok(rows)
}
