use crate::error::{GpError, Result};

/// Smoothness of the Matérn family; only the closed-form half-integer cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn from_value(nu: f64) -> Result<Self> {
        if (nu - 0.5).abs() < 1e-12 {
            Ok(Self::Half)
        } else if (nu - 1.5).abs() < 1e-12 {
            Ok(Self::ThreeHalves)
        } else if (nu - 2.5).abs() < 1e-12 {
            Ok(Self::FiveHalves)
        } else {
            Err(GpError::Domain(format!(
                "Matérn smoothness must be 0.5, 1.5 or 2.5, got {nu}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    pub nu: Smoothness,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            nu: Smoothness::ThreeHalves,
        }
    }
}

/// Covariance parameters θ = (σ², σ₁², ρ) and regression coefficients β.
#[derive(Clone, Debug, PartialEq)]
pub struct CovParams {
    pub sigma2: f64,
    pub sigma1_2: f64,
    pub rho: f64,
    pub beta: Vec<f64>,
}

/// Index of a covariance parameter; the order (σ², σ₁², ρ) is used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    Sigma2,
    Sigma1Sq,
    Rho,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Sigma2, Param::Sigma1Sq, Param::Rho];

    pub fn index(self) -> usize {
        match self {
            Param::Sigma2 => 0,
            Param::Sigma1Sq => 1,
            Param::Rho => 2,
        }
    }
}

impl CovParams {
    pub fn new(sigma2: f64, sigma1_2: f64, rho: f64) -> Result<Self> {
        let p = Self {
            sigma2,
            sigma1_2,
            rho,
            beta: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Result<Self> {
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("sigma1_2", self.sigma1_2),
            ("rho", self.rho),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GpError::Domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(GpError::Domain("beta must be finite".into()));
        }
        Ok(())
    }

    pub fn theta(&self) -> [f64; 3] {
        [self.sigma2, self.sigma1_2, self.rho]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.theta()[p.index()]
    }

    /// Copy with the covariance parameters replaced (β kept).
    pub fn with_theta(&self, theta: [f64; 3]) -> Self {
        Self {
            sigma2: theta[0],
            sigma1_2: theta[1],
            rho: theta[2],
            beta: self.beta.clone(),
        }
    }
}

impl KernelSpec {
    pub fn new(nu: f64) -> Result<Self> {
        Ok(Self {
            nu: Smoothness::from_value(nu)?,
        })
    }

    /// Correlation r(d) for range ρ, without input checks.
    #[inline]
    pub fn correlation(&self, rho: f64, dist: f64) -> f64 {
        let x = dist / rho;
        match self.nu {
            Smoothness::Half => (-x).exp(),
            Smoothness::ThreeHalves => {
                let s = 3f64.sqrt() * x;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::FiveHalves => {
                let s = 5f64.sqrt() * x;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    #[inline]
    pub fn cov(&self, p: &CovParams, dist: f64) -> f64 {
        p.sigma1_2 * self.correlation(p.rho, dist)
    }

    /// ∂c/∂ρ at distance `dist`.
    #[inline]
    pub fn dcov_drho(&self, p: &CovParams, dist: f64) -> f64 {
        let x = dist / p.rho;
        let g = match self.nu {
            Smoothness::Half => (-x).exp() * x,
            Smoothness::ThreeHalves => {
                let s = 3f64.sqrt() * x;
                s * s * (-s).exp()
            }
            Smoothness::FiveHalves => {
                let s = 5f64.sqrt() * x;
                s * s * (1.0 + s) * (-s).exp() / 3.0
            }
        };
        p.sigma1_2 * g / p.rho
    }

    /// Derivative of c(d) with respect to a covariance parameter (σ² does not enter c).
    #[inline]
    pub fn dcov(&self, p: &CovParams, dist: f64, wrt: Param) -> f64 {
        match wrt {
            Param::Sigma2 => 0.0,
            Param::Sigma1Sq => self.correlation(p.rho, dist),
            Param::Rho => self.dcov_drho(p, dist),
        }
    }

    /// Distance at which the correlation falls to `level`.
    pub fn effective_range(&self, rho: f64, level: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, rho);
        while self.correlation(rho, hi) > level {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.correlation(rho, mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Range ρ whose 0.05-correlation distance equals `eff_range`.
    pub fn rho_for_effective_range(&self, eff_range: f64) -> f64 {
        eff_range / self.effective_range(1.0, 0.05)
    }
}

fn check_dist(dist: f64) -> Result<()> {
    if !dist.is_finite() || dist < 0.0 {
        return Err(GpError::Domain(format!(
            "distance must be finite and nonnegative, got {dist}"
        )));
    }
    Ok(())
}

pub fn kernel_eval(spec: &KernelSpec, params: &CovParams, dist: f64) -> Result<f64> {
    check_dist(dist)?;
    params.validate()?;
    Ok(spec.cov(params, dist))
}

pub fn kernel_grad(spec: &KernelSpec, params: &CovParams, dist: f64, wrt: Param) -> Result<f64> {
    check_dist(dist)?;
    params.validate()?;
    match wrt {
        Param::Sigma2 => Err(GpError::Domain(
            "the kernel does not depend on the nugget sigma2".into(),
        )),
        _ => Ok(spec.dcov(params, dist, wrt)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TaperFamily {
    Wendland1,
    #[default]
    Wendland2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaperSpec {
    pub family: TaperFamily,
    pub gamma: f64,
}

impl TaperSpec {
    pub fn new(family: TaperFamily, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(GpError::Domain(format!("taper range must be > 0, got {gamma}")));
        }
        Ok(Self { family, gamma })
    }

    pub fn wendland2(gamma: f64) -> Result<Self> {
        Self::new(TaperFamily::Wendland2, gamma)
    }

    #[inline]
    pub fn value(&self, dist: f64) -> f64 {
        let r = dist / self.gamma;
        if r >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - r;
        match self.family {
            TaperFamily::Wendland1 => q.powi(4) * (1.0 + 4.0 * r),
            TaperFamily::Wendland2 => q.powi(6) * (1.0 + 6.0 * r + 35.0 * r * r / 3.0),
        }
    }
}

pub fn taper_eval(spec: &TaperSpec, dist: f64) -> Result<f64> {
    check_dist(dist)?;
    Ok(spec.value(dist))
}
