//! Preconditioned CG with Lanczos tridiagonals, stochastic Lanczos
//! quadrature, stochastic trace and diagonal estimation.

pub mod diag;
pub mod lanczos;
pub mod pcg;
pub mod slq;

pub use diag::{stochastic_diag, stochastic_diag_samples};
pub use lanczos::lanczos;
pub use pcg::{pcg_solve, pcg_solve_multi, PcgOutput, PcgSolver, SolveReport};
pub use slq::{
    c_opt, control_samples, cv_combine, generate_probes, log_quadrature, slq_logdet, ste_grad_trace,
    ste_grad_trace_cv, ste_grad_trace_samples, CvMode, ProbeSet, SlqOutput,
};

use crate::error::{GpError, Result};

/// Distribution of the probe vectors zᵢ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProbeDist {
    Gaussian,
    Rademacher,
    /// zᵢ ~ N(0, P) drawn through the preconditioner.
    #[default]
    PrecondGaussian,
}

impl ProbeDist {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "precond-gaussian" | "preconditioned" => Ok(Self::PrecondGaussian),
            _ => Err(GpError::Config(format!("unknown probe distribution '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgConfig {
    /// Absolute tolerance δ on ‖A x − b‖₂.
    pub tol: f64,
    pub max_iter: usize,
    pub num_probes: usize,
    pub probe_dist: ProbeDist,
    pub seed: u64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 1000,
            num_probes: 50,
            probe_dist: ProbeDist::PrecondGaussian,
            seed: 0,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(GpError::Config(format!("CG tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.num_probes == 0 {
            return Err(GpError::Config("max_iter and num_probes must be at least 1".into()));
        }
        Ok(())
    }
}
