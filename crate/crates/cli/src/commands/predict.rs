use std::fmt::Write as _;
use std::path::Path;

use fsagp::estimation::{score, Backend as MeanBackend, Scores};
use fsagp::fsa::{ExactFsa, FsaModel};
use fsagp::inducing::{select, InducingMethod};
use fsagp::kernels::{KernelSpec, TaperSpec};
use fsagp::precond::{build_for_model, PrecondKind};
use fsagp::prediction::{
    predict_mean, predict_var_exact, predict_var_lanczos, predict_var_sim, Backend, PredictionInputs, SimVarConfig,
};

use super::fit::FitFile;
use super::{write_table, write_text};
use crate::config::{RunConfig, VarMethodArg};
use crate::data::{fmt17, Dataset};
use crate::error::{CliError, CliResult};

pub struct PredictOutput {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub scores: Option<Scores>,
}

/// Predictive means and variances at the "test" rows of `test_path` from the
/// fitted model on the "train" rows of `train_path`.
pub fn run(
    cfg: &RunConfig,
    fit_path: &Path,
    train_path: &Path,
    test_path: &Path,
    out: &Path,
    scores_out: Option<&Path>,
) -> CliResult<PredictOutput> {
    let fitted = FitFile::read(fit_path)?;
    let train = Dataset::read(train_path)?.rows_tagged("train")?;
    let test = Dataset::read(test_path)?.rows_tagged("test")?;
    if train.locs.dim() != test.locs.dim() {
        return Err(CliError::config(format!(
            "dimension mismatch: training locations have d = {}, test locations d = {}",
            train.locs.dim(),
            test.locs.dim()
        )));
    }
    if train.covariate_names() != fitted.covariates || test.covariate_names() != fitted.covariates {
        return Err(CliError::config(format!(
            "covariate columns differ from the fit (expected {:?})",
            fitted.covariates
        )));
    }
    let y = train.response(train_path)?;
    let x = train.design(fitted.intercept);
    let xp = test.design(fitted.intercept);

    let ind = select(
        &train.locs,
        fitted.m,
        InducingMethod::parse(&fitted.inducing)?,
        fitted.inducing_seed,
    )?;
    let model = FsaModel::assemble(
        &train.locs,
        &ind,
        &fitted.params()?,
        &KernelSpec::new(fitted.nu)?,
        &TaperSpec::wendland2(fitted.taper_gamma)?,
    )?;
    let inputs = PredictionInputs::new(&model, &test.locs, xp)?;
    let p = &cfg.predict;
    let cg = cfg.cg_config()?;
    let precond = build_for_model(&model, PrecondKind::parse(&p.precond)?, None)?;
    let mean_backend = MeanBackend::parse(&p.mean_backend)?;
    let var_method = VarMethodArg::parse(&p.var_method)?;
    let backend = match mean_backend {
        MeanBackend::Cholesky => Backend::Exact,
        MeanBackend::Iterative => Backend::Iterative {
            precond: precond.as_ref(),
            cfg: &cg,
        },
    };
    let mean = predict_mean(&model, &inputs, y, x.as_ref(), backend)?.mean;
    let var = match var_method {
        VarMethodArg::Exact => predict_var_exact(&ExactFsa::new(&model)?, &inputs)?,
        VarMethodArg::Sim => {
            let sim = SimVarConfig {
                num_probes: p.num_probes,
                cv: p.cv,
                seed: p.seed,
                cg: cg.clone(),
            };
            predict_var_sim(&model, &inputs, precond.as_ref(), &sim)?
        }
        VarMethodArg::Lanczos => predict_var_lanczos(&model, &inputs, precond.as_ref(), p.lanczos_rank, &cg, p.seed)?,
    }
    .var;

    let d = test.locs.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend(["mean".into(), "var".into()]);
    let rows: Vec<Vec<String>> = (0..test.len())
        .map(|i| {
            let mut r: Vec<String> = test.locs.point(i).iter().map(|v| fmt17(*v)).collect();
            r.push(fmt17(mean[i]));
            r.push(fmt17(var[i]));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(out, &header, &rows)?;

    let scores = match &test.y {
        Some(yt) => Some(score(yt, &mean, &var)?),
        None => None,
    };
    if let (Some(s), Some(path)) = (&scores, scores_out) {
        let mut text = String::new();
        let _ = writeln!(text, "n_p = {}", test.len());
        let _ = writeln!(text, "rmse = {}", fmt17(s.rmse));
        let _ = writeln!(text, "log_score = {}", fmt17(s.log_score));
        let _ = writeln!(text, "crps = {}", fmt17(s.crps));
        write_text(path, &text)?;
    }
    Ok(PredictOutput { mean, var, scores })
}
