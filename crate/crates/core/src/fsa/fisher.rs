use rayon::prelude::*;

use super::derivs::FsaDerivatives;
use super::exact::ExactFsa;
use crate::error::{GpError, Result};
use crate::kernels::Param;
use crate::linalg::{dot, DenseMatrix};
use crate::operator::LinearSolver;
use crate::random::{gaussian_vec, stream};

/// Fisher information ½Tr(Σ̃†⁻¹∂ₖΣ̃†⁻¹∂ₗ) from dense matrices.
pub fn fisher_exact(exact: &ExactFsa<'_>, derivs: &FsaDerivatives<'_>) -> [[f64; 3]; 3] {
    let inv = exact.inverse_dense();
    let b: Vec<DenseMatrix> = Param::ALL.iter().map(|&p| &inv * derivs.to_dense(p)).collect();
    let mut out = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..=k {
            // Tr(Bₖ Bₗ) = Σᵢⱼ (Bₖ)ᵢⱼ (Bₗ)ⱼᵢ
            let t: f64 = (0..inv.nrows())
                .map(|j| {
                    let col = b[k].col_as_slice(j);
                    (0..inv.nrows()).map(|i| col[i] * b[l][(j, i)]).sum::<f64>()
                })
                .sum();
            out[k][l] = 0.5 * t;
            out[l][k] = 0.5 * t;
        }
    }
    out
}

/// Per-probe Fisher samples: entry (k,l) of probe i is
/// ½·(zᵢᵀΣ̃†⁻¹∂ₖ)(Σ̃†⁻¹∂ₗzᵢ), symmetrized over k and l.
pub fn fisher_ste_samples(
    derivs: &FsaDerivatives<'_>,
    solver: &dyn LinearSolver,
    num_probes: usize,
    seed: u64,
) -> Result<Vec<[[f64; 3]; 3]>> {
    if num_probes == 0 {
        return Err(GpError::Config("at least one probe vector is required".into()));
    }
    let n = derivs.model().n();
    (0..num_probes)
        .into_par_iter()
        .map(|i| {
            let z = gaussian_vec(&mut stream(seed, i as u64), n);
            let s = solver.solve(&z)?;
            let mut left = Vec::with_capacity(3);
            let mut right = Vec::with_capacity(3);
            let mut tmp = vec![0.0; n];
            for p in Param::ALL {
                // ∂ₖΣ̃†⁻¹z is the transpose of zᵀΣ̃†⁻¹∂ₖ by symmetry
                derivs.apply(p, &s, &mut tmp);
                left.push(tmp.clone());
                derivs.apply(p, &z, &mut tmp);
                right.push(solver.solve(&tmp)?);
            }
            let mut e = [[0.0; 3]; 3];
            for k in 0..3 {
                for l in 0..3 {
                    e[k][l] = 0.25 * (dot(&left[k], &right[l]) + dot(&left[l], &right[k]));
                }
            }
            Ok(e)
        })
        .collect()
}

/// Stochastic Fisher information averaged over `num_probes` Gaussian probes.
/// Symmetric by construction; positive semidefinite only in expectation.
pub fn fisher_ste(
    derivs: &FsaDerivatives<'_>,
    solver: &dyn LinearSolver,
    num_probes: usize,
    seed: u64,
) -> Result<[[f64; 3]; 3]> {
    let samples = fisher_ste_samples(derivs, solver, num_probes, seed)?;
    let mut out = [[0.0; 3]; 3];
    for e in &samples {
        for k in 0..3 {
            for l in 0..3 {
                out[k][l] += e[k][l] / num_probes as f64;
            }
        }
    }
    Ok(out)
}
