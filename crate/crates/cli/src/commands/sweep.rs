use std::path::Path;

use fsagp::fsa::{nll_exact, FsaModel};
use fsagp::inducing::select;
use fsagp::kernels::{gamma_for_realized_nnz, TaperSpec};
use fsagp::linalg::DenseMatrix;
use fsagp::simulate::{simulate_gp, uniform_locations};

use super::write_table;
use crate::config::RunConfig;
use crate::data::{fmt17, Dataset};
use crate::error::CliResult;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub m: usize,
    pub n_gamma: f64,
    pub gamma: f64,
    pub nll: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub cells: Vec<SweepCell>,
    /// Mean NLL per m (over n_γ) and per n_γ (over m), in grid order.
    pub mean_by_m: Vec<f64>,
    pub mean_by_n_gamma: Vec<f64>,
}

impl SweepOutput {
    pub fn report(&self) -> String {
        let nonincreasing = |x: &[f64]| x.windows(2).all(|w| w[1] <= w[0]);
        format!(
            "{} cells\nmean NLL by m: {:?} (nonincreasing: {})\nmean NLL by n_gamma: {:?} (nonincreasing: {})",
            self.cells.len(),
            self.mean_by_m,
            nonincreasing(&self.mean_by_m),
            self.mean_by_n_gamma,
            nonincreasing(&self.mean_by_n_gamma)
        )
    }
}

/// Cholesky NLL of the zero-mean FSA model at the `[params]` values over the
/// (m, n_γ) grid, on `data` or on a dense simulation of `sweep.n` points.
pub fn run(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> CliResult<SweepOutput> {
    let s = &cfg.sweep;
    let params = cfg.true_params()?;
    let kernel = cfg.kernel()?;
    let (locs, y) = match data {
        Some(path) => {
            let d = Dataset::read(path)?.rows_tagged("train")?;
            let y = d.response(path)?.to_vec();
            (d.locs, y)
        }
        None => {
            let locs = uniform_locations(s.n, 2, s.seed)?;
            let y = simulate_gp(&locs, &params, &kernel, s.seed + 1)?;
            (locs, y)
        }
    };
    let x = DenseMatrix::zeros(locs.len(), 0);
    let mut cells = Vec::new();
    for &m in &s.m {
        let ind = select(&locs, m, cfg.inducing_method()?, cfg.model.inducing_seed)?;
        for &n_gamma in &s.n_gamma {
            let gamma = gamma_for_realized_nnz(&locs, n_gamma)?;
            let model = FsaModel::assemble(&locs, &ind, &params, &kernel, &TaperSpec::wendland2(gamma)?)?;
            cells.push(SweepCell {
                m,
                n_gamma,
                gamma,
                nll: nll_exact(&model, &y, &x)?,
            });
        }
    }
    let avg = |f: &dyn Fn(&SweepCell) -> bool| {
        let v: Vec<f64> = cells.iter().filter(|c| f(c)).map(|c| c.nll).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mean_by_m = s.m.iter().map(|&m| avg(&|c| c.m == m)).collect();
    let mean_by_n_gamma = s.n_gamma.iter().map(|&g| avg(&|c| c.n_gamma == g)).collect();
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![c.m.to_string(), c.n_gamma.to_string(), fmt17(c.gamma), fmt17(c.nll)])
        .collect();
    write_table(out, &["m", "n_gamma", "gamma", "nll"], &rows)?;
    Ok(SweepOutput {
        cells,
        mean_by_m,
        mean_by_n_gamma,
    })
}
