//! Covariance and taper functions, locations with neighbour search, sparse
//! storage, and matrix assembly.

pub mod assembly;
pub mod covariance;
pub mod locations;
pub mod sparse;

pub use assembly::{
    cross_cov, cross_taper_pattern, distance_matrix, gamma_for_realized_nnz, gamma_for_target_nnz,
    taper_pattern,
};
pub use covariance::{
    kernel_eval, kernel_grad, taper_eval, CovParams, KernelSpec, Param, Smoothness, TaperFamily,
    TaperSpec,
};
pub use locations::{GridIndex, KdTree, LocationSet};
pub use sparse::{SparseRect, SparseSym};
