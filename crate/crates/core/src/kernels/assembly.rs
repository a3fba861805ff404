use rayon::prelude::*;

use super::covariance::{CovParams, KernelSpec};
use super::locations::{GridIndex, LocationSet};
use super::sparse::{SparseRect, SparseSym};
use crate::error::{check_len, GpError, Result};
use crate::linalg::DenseMatrix;

/// Dense cross-covariance `[c(aᵢ, bⱼ)]`.
pub fn cross_cov(
    a: &LocationSet,
    b: &LocationSet,
    spec: &KernelSpec,
    params: &CovParams,
) -> Result<DenseMatrix> {
    check_len("location dimension", a.dim(), b.dim())?;
    let mut m = DenseMatrix::zeros(a.len(), b.len());
    fill_columns(&mut m, |i, j| spec.cov(params, super::locations::euclid(a.point(i), b.point(j))));
    Ok(m)
}

/// Dense matrix of pairwise distances.
pub fn distance_matrix(a: &LocationSet, b: &LocationSet) -> Result<DenseMatrix> {
    check_len("location dimension", a.dim(), b.dim())?;
    let mut m = DenseMatrix::zeros(a.len(), b.len());
    fill_columns(&mut m, |i, j| super::locations::euclid(a.point(i), b.point(j)));
    Ok(m)
}

/// Fill a column-major matrix column by column in parallel.
pub(crate) fn fill_columns<F: Fn(usize, usize) -> f64 + Sync>(m: &mut DenseMatrix, f: F) {
    let nrows = m.nrows();
    let cols: Vec<Vec<f64>> = (0..m.ncols())
        .into_par_iter()
        .map(|j| (0..nrows).map(|i| f(i, j)).collect())
        .collect();
    for (j, c) in cols.into_iter().enumerate() {
        m.col_as_slice_mut(j).copy_from_slice(&c);
    }
}

/// Taper sparsity pattern: all pairs closer than `gamma` plus the diagonal.
/// The stored values are the pairwise distances.
pub fn taper_pattern(locs: &LocationSet, gamma: f64) -> Result<SparseSym> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(GpError::Domain(format!("taper range must be > 0, got {gamma}")));
    }
    let grid = GridIndex::new(locs, gamma);
    let rows: Vec<Vec<(usize, f64)>> = (0..locs.len())
        .into_par_iter()
        .map(|i| {
            let mut nb = grid.within(locs, locs.point(i), gamma);
            if nb.binary_search(&i).is_err() {
                // coincident points always qualify, so this only triggers for γ ≤ 0 roundoff
                let pos = nb.partition_point(|&j| j < i);
                nb.insert(pos, i);
            }
            nb.into_iter().map(|j| (j, locs.dist(i, j))).collect()
        })
        .collect();
    Ok(SparseSym::from_rows(rows))
}

/// Cross pattern between `a` (rows) and `b` (columns): pairs closer than
/// `gamma`, values are distances.
pub fn cross_taper_pattern(a: &LocationSet, b: &LocationSet, gamma: f64) -> Result<SparseRect> {
    check_len("location dimension", a.dim(), b.dim())?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(GpError::Domain(format!("taper range must be > 0, got {gamma}")));
    }
    let grid = GridIndex::new(b, gamma);
    let rows: Vec<Vec<(usize, f64)>> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            grid.within(b, a.point(i), gamma)
                .into_iter()
                .map(|j| (j, super::locations::euclid(a.point(i), b.point(j))))
                .collect()
        })
        .collect();
    Ok(SparseRect::from_rows(b.len(), rows))
}

/// Taper range giving on average `n_gamma` entries per row for `n` uniform
/// points on a planar domain of the given area (n_γ ≈ n·π·γ²/area).
pub fn gamma_for_target_nnz(n: usize, n_gamma: f64, area: f64) -> f64 {
    (n_gamma * area / (std::f64::consts::PI * n as f64)).sqrt()
}

/// Taper range that realizes `n_gamma` average row entries on these exact
/// locations, found by bisection on the realized pattern.
pub fn gamma_for_realized_nnz(locs: &LocationSet, n_gamma: f64) -> Result<f64> {
    let diag = locs.bbox_diagonal().max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (diag * 1e-9, diag * 1.01);
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if taper_pattern(locs, mid)?.avg_row_nnz() < n_gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-4 {
            break;
        }
    }
    Ok(hi)
}
