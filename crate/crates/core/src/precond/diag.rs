use rand::RngCore;

use super::Preconditioner;
use crate::error::{GpError, Result};
use crate::fsa::{FsaDerivatives, FsaModel};
use crate::kernels::Param;
use crate::random::gaussian_vec;

/// P = diag(d).
#[derive(Clone, Debug)]
pub struct DiagPrecond {
    d: Vec<f64>,
    dd: Option<[Vec<f64>; 3]>,
}

impl DiagPrecond {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(GpError::NotPositiveDefinite {
                stage: "diagonal preconditioner".into(),
            });
        }
        Ok(Self { d, dd: None })
    }

    /// D_s = diag(Σ̃_s).
    pub fn for_model(model: &FsaModel) -> Result<Self> {
        Self::new(model.sparse_diag())
    }

    pub fn with_gradients(mut self, derivs: &FsaDerivatives<'_>) -> Self {
        self.dd = Some(Param::ALL.map(|p| derivs.get(p).sparse.diag()));
        self
    }

    pub fn diag(&self) -> &[f64] {
        &self.d
    }
}

impl Preconditioner for DiagPrecond {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn solve(&self, r: &[f64], out: &mut [f64]) {
        for ((o, ri), di) in out.iter_mut().zip(r).zip(&self.d) {
            *o = ri / di;
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), di) in out.iter_mut().zip(x).zip(&self.d) {
            *o = xi * di;
        }
    }

    fn logdet(&self) -> f64 {
        self.d.iter().map(|x| x.ln()).sum()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut z = gaussian_vec(rng, self.d.len());
        for (zi, di) in z.iter_mut().zip(&self.d) {
            *zi *= di.sqrt();
        }
        z
    }

    fn grad_logdet_trace(&self, wrt: Param) -> Result<f64> {
        let dd = self.grads(wrt)?;
        Ok(dd.iter().zip(&self.d).map(|(a, b)| a / b).sum())
    }

    fn deriv_apply(&self, wrt: Param, x: &[f64], out: &mut [f64]) -> Result<()> {
        let dd = self.grads(wrt)?;
        for ((o, xi), di) in out.iter_mut().zip(x).zip(dd) {
            *o = xi * di;
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "diagonal"
    }
}

impl DiagPrecond {
    fn grads(&self, wrt: Param) -> Result<&[f64]> {
        self.dd
            .as_ref()
            .map(|d| d[wrt.index()].as_slice())
            .ok_or_else(|| GpError::Domain("diagonal preconditioner built without derivatives".into()))
    }
}
