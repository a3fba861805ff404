//! Preconditioners P with solve, log-determinant, sampling from N(0, P) and
//! gradient traces Tr(P⁻¹∂P/∂θ).

pub mod diag;
pub mod fitc;
pub mod pivchol;

use rand::RngCore;

use crate::error::{GpError, Result};
use crate::fsa::{FsaDerivatives, FsaModel};
use crate::kernels::Param;
use crate::random::gaussian_vec;

pub use diag::DiagPrecond;
pub use fitc::FitcPrecond;
pub use pivchol::{build_piv_chol, PivCholPrecond};

pub trait Preconditioner: Sync {
    fn dim(&self) -> usize;

    /// `out ← P⁻¹ r`
    fn solve(&self, r: &[f64], out: &mut [f64]);

    /// `out ← P x`
    fn apply(&self, x: &[f64], out: &mut [f64]);

    fn logdet(&self) -> f64;

    /// Draw z ~ N(0, P).
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Exact Tr(P⁻¹ ∂P/∂θ).
    fn grad_logdet_trace(&self, wrt: Param) -> Result<f64> {
        Err(GpError::Domain(format!(
            "{} preconditioner does not provide gradient traces ({wrt:?})",
            self.name()
        )))
    }

    /// `out ← ∂P/∂θ x`
    fn deriv_apply(&self, wrt: Param, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(GpError::Domain(format!(
            "{} preconditioner does not provide derivatives ({wrt:?})",
            self.name()
        )))
    }

    fn name(&self) -> &'static str;

    fn solve_vec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.solve(r, &mut out);
        out
    }
}

/// P = I.
#[derive(Clone, Debug)]
pub struct IdentityPrecond {
    pub n: usize,
}

impl Preconditioner for IdentityPrecond {
    fn dim(&self) -> usize {
        self.n
    }

    fn solve(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn logdet(&self) -> f64 {
        0.0
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        gaussian_vec(rng, self.n)
    }

    fn grad_logdet_trace(&self, _wrt: Param) -> Result<f64> {
        Ok(0.0)
    }

    fn deriv_apply(&self, _wrt: Param, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        Ok(())
    }

    fn name(&self) -> &'static str {
        "none"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PrecondKind {
    None,
    Diagonal,
    #[default]
    Fitc,
    PivotedCholesky { rank: usize },
}

impl PrecondKind {
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "none" | "identity" => Ok(Self::None),
            "diag" | "diagonal" => Ok(Self::Diagonal),
            "fitc" => Ok(Self::Fitc),
            _ => {
                if let Some(k) = lower.strip_prefix("pivchol") {
                    let k = k.trim_start_matches([':', '-', '_']);
                    let rank = k
                        .parse()
                        .map_err(|_| GpError::Config(format!("bad pivoted Cholesky rank in '{s}'")))?;
                    Ok(Self::PivotedCholesky { rank })
                } else {
                    Err(GpError::Config(format!("unknown preconditioner '{s}'")))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::None => "none".into(),
            Self::Diagonal => "diagonal".into(),
            Self::Fitc => "fitc".into(),
            Self::PivotedCholesky { rank } => format!("pivchol:{rank}"),
        }
    }
}

/// Preconditioner for Σ̃† of `model`; gradient support is attached when
/// `derivs` is given.
pub fn build_for_model(
    model: &FsaModel,
    kind: PrecondKind,
    derivs: Option<&FsaDerivatives<'_>>,
) -> Result<Box<dyn Preconditioner>> {
    Ok(match kind {
        PrecondKind::None => Box::new(IdentityPrecond { n: model.n() }),
        PrecondKind::Diagonal => {
            let p = DiagPrecond::for_model(model)?;
            Box::new(match derivs {
                Some(d) => p.with_gradients(d),
                None => p,
            })
        }
        PrecondKind::Fitc => {
            let p = FitcPrecond::for_model(model)?;
            Box::new(match derivs {
                Some(d) => p.with_gradients(d),
                None => p,
            })
        }
        PrecondKind::PivotedCholesky { rank } => Box::new(PivCholPrecond::for_model(model, rank)?),
    })
}
