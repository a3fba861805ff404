//! Matrix-free operator and solver contracts shared by the Krylov code.

use crate::error::Result;
use crate::linalg::{mat_vec, DenseMatrix};

/// A symmetric linear map applied to vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `out ← A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply(x, &mut out);
        out
    }
}

/// Something that can apply an inverse.
pub trait LinearSolver: Sync {
    fn dim(&self) -> usize;

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>>;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
}

/// Dense matrix viewed as an operator; mostly for oracles and small problems.
pub struct DenseOperator<'a>(pub &'a DenseMatrix);

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(self.0, x, out);
    }
}

/// Diagonal matrix.
pub struct DiagOperator(pub Vec<f64>);

impl LinearOperator for DiagOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), d) in out.iter_mut().zip(x).zip(&self.0) {
            *o = d * xi;
        }
    }
}

/// `A + s·I`
pub struct Shifted<A> {
    pub inner: A,
    pub shift: f64,
}

impl<A: LinearOperator> LinearOperator for Shifted<A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.shift * xi;
        }
    }
}
