use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{check_len, GpError, Result};

/// Proper scoring rules of Gaussian predictive distributions, averaged over points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub rmse: f64,
    /// −(1/n) Σ log φ(yᵢ; μᵢ, σᵢ²)
    pub log_score: f64,
    pub crps: f64,
}

/// CRPS of N(μ, σ²) at y in closed form: σ(z(2Φ(z) − 1) + 2φ(z) − 1/√π).
pub fn crps_gaussian(y: f64, mean: f64, sd: f64) -> f64 {
    let std = Normal::standard();
    if sd == 0.0 {
        return (y - mean).abs();
    }
    let z = (y - mean) / sd;
    sd * (z * (2.0 * std.cdf(z) - 1.0) + 2.0 * std.pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

pub fn score(y_true: &[f64], mean: &[f64], var: &[f64]) -> Result<Scores> {
    let n = y_true.len();
    check_len("predictive means", n, mean.len())?;
    check_len("predictive variances", n, var.len())?;
    if n == 0 {
        return Err(GpError::Domain("cannot score an empty prediction set".into()));
    }
    if let Some(v) = var.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(GpError::Domain(format!("predictive variance must be positive, got {v}")));
    }
    let (mut se, mut ls, mut crps) = (0.0, 0.0, 0.0);
    for ((&y, &m), &v) in y_true.iter().zip(mean).zip(var) {
        let e = y - m;
        se += e * e;
        ls += 0.5 * (2.0 * std::f64::consts::PI * v).ln() + e * e / (2.0 * v);
        crps += crps_gaussian(y, m, v.sqrt());
    }
    let nf = n as f64;
    Ok(Scores {
        rmse: (se / nf).sqrt(),
        log_score: ls / nf,
        crps: crps / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// ∫ (F(x) − 1{x ≥ y})² dx by composite Simpson on either side of y.
    fn crps_quadrature(y: f64, mean: f64, sd: f64) -> f64 {
        let f = |x: f64| Normal::new(mean, sd).unwrap().cdf(x);
        let simpson = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| {
            let k = 20_000;
            let h = (b - a) / k as f64;
            let mut s = g(a) + g(b);
            for i in 1..k {
                s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let lo = (mean - 14.0 * sd).min(y);
        let hi = (mean + 14.0 * sd).max(y);
        simpson(lo, y, &|x| f(x).powi(2)) + simpson(y, hi, &|x| (1.0 - f(x)).powi(2))
    }

    #[test]
    fn standard_normal_at_its_mean() {
        let s = score(&[0.0], &[0.0], &[1.0]).unwrap();
        assert!((s.log_score - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let want = 2.0 / (2.0 * std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt();
        assert!((s.crps - want).abs() < 1e-15);
        assert_eq!(s.rmse, 0.0);
    }

    #[test]
    fn point_mass_limit_and_errors() {
        let s = score(&[1.5, -2.0], &[1.5, -2.0], &[1e-300, 1e-300]).unwrap();
        assert_eq!(s.rmse, 0.0);
        assert!(s.crps < 1e-140);
        assert!(score(&[1.0], &[1.0], &[0.0]).is_err());
        assert!(score(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn crps_matches_quadrature(y in -5.0f64..5.0, mean in -3.0f64..3.0, sd in 0.1f64..3.0) {
            let closed = crps_gaussian(y, mean, sd);
            let quad = crps_quadrature(y, mean, sd);
            prop_assert!((closed - quad).abs() < 1e-6, "{} vs {}", closed, quad);
        }
    }
}
