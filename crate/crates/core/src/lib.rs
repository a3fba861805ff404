//! Gaussian-process regression for large spatial data sets with the
//! full-scale approximation: a low-rank inducing-point part plus a tapered
//! sparse residual. Exact (Cholesky/Woodbury) and iterative (preconditioned
//! CG, stochastic Lanczos quadrature, stochastic trace estimation) backends
//! are provided, together with Vecchia approximations.

pub mod error;
pub mod estimation;
pub mod fsa;
pub mod inducing;
pub mod kernels;
pub mod krylov;
pub mod linalg;
pub mod operator;
pub mod precond;
pub mod prediction;
pub mod random;
pub mod simulate;
pub mod vecchia;

pub use error::{GpError, Result};
