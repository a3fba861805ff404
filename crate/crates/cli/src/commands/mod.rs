pub mod bench;
pub mod fit;
pub mod predict;
pub mod simulate;
pub mod sweep;
pub mod vecchia;

use std::io::Write;
use std::path::Path;

use fsagp::inducing::{select, InducingSet};
use fsagp::kernels::{gamma_for_realized_nnz, LocationSet, TaperSpec};

use crate::config::RunConfig;
use crate::error::{io_err, CliResult};

/// Inducing points and taper of the FSA model for `locs`.
pub fn model_setup(cfg: &RunConfig, locs: &LocationSet, m: usize) -> CliResult<(InducingSet, TaperSpec)> {
    let ind = select(locs, m, cfg.inducing_method()?, cfg.model.inducing_seed)?;
    let gamma = match cfg.model.taper_gamma {
        Some(g) => g,
        None => gamma_for_realized_nnz(locs, cfg.model.n_gamma)?,
    };
    Ok((ind, TaperSpec::wendland2(gamma)?))
}

/// Writes `header` and `rows` as CSV (fields are already formatted).
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Markdown rendering of the same table.
pub fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        s.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    s
}
