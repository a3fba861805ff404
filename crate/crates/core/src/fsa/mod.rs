//! The full-scale approximation operator and its exact (Cholesky/Woodbury)
//! likelihood, gradient and Fisher information.

pub mod derivs;
pub mod exact;
pub mod fisher;
pub mod model;

pub use derivs::{FsaDerivatives, LowRankDeriv, ParamDeriv};
pub use exact::{grad_exact, logdet_sylvester, nll_exact, residual, solve_woodbury, ExactFsa, DEFAULT_EXACT_LIMIT};
pub use fisher::{fisher_exact, fisher_ste};
pub use model::{FsaModel, SparsePart, SIGMA_M_JITTER};
