use crate::error::{GpError, Result};
use crate::linalg::{axpy, dot, norm2, DenseMatrix, TridiagMatrix};
use crate::operator::LinearOperator;

/// β below this multiple of ‖A qⱼ‖ counts as an invariant subspace.
const BREAKDOWN_TOL: f64 = 1e-10;

/// `k`-step Lanczos tridiagonalization A Q ≈ Q T started at `init/‖init‖`.
/// Returns fewer than `k` columns on breakdown. With `reorth` every new
/// vector is Gram-Schmidt orthogonalized twice against all previous ones.
pub fn lanczos(
    a: &dyn LinearOperator,
    init: &[f64],
    k: usize,
    reorth: bool,
) -> Result<(DenseMatrix, TridiagMatrix)> {
    let n = a.dim();
    crate::error::check_len("Lanczos start vector", n, init.len())?;
    let nrm = norm2(init);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(GpError::Domain("Lanczos start vector must be nonzero and finite".into()));
    }
    let k = k.min(n);
    let mut q: Vec<Vec<f64>> = vec![init.iter().map(|x| x / nrm).collect()];
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut w = vec![0.0; n];
    for j in 0..k {
        a.apply(&q[j], &mut w);
        let scale = norm2(&w);
        let aj = dot(&q[j], &w);
        alpha.push(aj);
        axpy(-aj, &q[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &q[j - 1], &mut w);
        }
        if reorth {
            for _ in 0..2 {
                for qi in &q {
                    let c = dot(qi, &w);
                    axpy(-c, qi, &mut w);
                }
            }
        }
        if j + 1 == k {
            break;
        }
        let b = norm2(&w);
        if b <= BREAKDOWN_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b);
        q.push(w.iter().map(|x| x / b).collect());
    }
    let kk = alpha.len();
    beta.truncate(kk.saturating_sub(1));
    let mut qm = DenseMatrix::zeros(n, kk);
    for (j, col) in q.iter().take(kk).enumerate() {
        qm.col_as_slice_mut(j).copy_from_slice(col);
    }
    Ok((qm, TridiagMatrix::new(alpha, beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::{model::tests::instance, SparsePart};
    use crate::linalg::symmetric_eigenvalues;
    use crate::operator::DiagOperator;

    #[test]
    fn identity_truncates_to_one_step() {
        let (q, t) = lanczos(&DiagOperator(vec![1.0; 5]), &[1.0, 2.0, 0.0, 0.0, 1.0], 4, true).unwrap();
        assert_eq!(t.dim(), 1);
        assert!((t.diag[0] - 1.0).abs() < 1e-15);
        assert_eq!(q.ncols(), 1);
        assert!(lanczos(&DiagOperator(vec![1.0; 2]), &[0.0, 0.0], 2, false).is_err());
    }

    #[test]
    fn full_run_recovers_diagonal_spectrum() {
        let d: Vec<f64> = (1..=12).map(|i| i as f64 * 0.7).collect();
        let (_, t) = lanczos(&DiagOperator(d.clone()), &[1.0; 12], 12, true).unwrap();
        let ev = t.eigenvalues().unwrap();
        for (a, b) in ev.iter().zip(&d) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ritz_values_interlace_and_basis_is_orthonormal() {
        let model = instance(300, 15, 0.1, 4);
        let op = SparsePart(&model);
        let init: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64).sin()).collect();
        let (q, t) = lanczos(&op, &init, 30, true).unwrap();
        assert_eq!(t.dim(), 30);
        let qtq = q.transpose() * &q;
        for i in 0..30 {
            for j in 0..30 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-10);
            }
        }
        let dense = symmetric_eigenvalues(model.sigma_s().to_dense().as_ref()).unwrap();
        let ritz = t.eigenvalues().unwrap();
        let (lo, hi) = (dense[0], dense[dense.len() - 1]);
        // Cauchy interlacing: θ_i ≥ λ_i and θ_{k-i} ≤ λ_{n-i} (ascending order)
        let (n, k) = (dense.len(), ritz.len());
        for i in 0..k {
            assert!(ritz[i] >= dense[i] - 1e-9);
            assert!(ritz[k - 1 - i] <= dense[n - 1 - i] + 1e-9);
            assert!(ritz[i] >= lo - 1e-9 && ritz[i] <= hi + 1e-9);
        }
    }
}
