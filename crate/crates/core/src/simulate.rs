//! Synthetic spatial data: uniform designs, Gaussian-process draws and
//! empirical variograms.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{GpError, Result};
use crate::kernels::{cross_cov, CovParams, KernelSpec, LocationSet};
use crate::linalg::Cholesky;
use crate::random::{gaussian_vec, stream};
use crate::vecchia::{build_vecchia, VecchiaOrdering};

/// Largest n sampled through a dense Cholesky factor.
pub const DENSE_SIM_LIMIT: usize = 20_000;

/// n points drawn uniformly from [0, 1]^d.
pub fn uniform_locations(n: usize, d: usize, seed: u64) -> Result<LocationSet> {
    let mut rng = stream(seed, u64::MAX);
    LocationSet::new((0..n * d).map(|_| rng.random::<f64>()).collect(), d)
}

/// y ~ N(0, Σ + σ²I) by a dense Cholesky factor; n ≤ [`DENSE_SIM_LIMIT`].
pub fn simulate_gp(locs: &LocationSet, params: &CovParams, kernel: &KernelSpec, seed: u64) -> Result<Vec<f64>> {
    let n = locs.len();
    if n > DENSE_SIM_LIMIT {
        return Err(GpError::TooLarge {
            n,
            limit: DENSE_SIM_LIMIT,
        });
    }
    params.validate()?;
    let mut s = cross_cov(locs, locs, kernel, params)?;
    for i in 0..n {
        s[(i, i)] += params.sigma2;
    }
    let ch = Cholesky::new(s.as_ref(), "simulation covariance")?;
    Ok(ch.mul_lower_vec(&gaussian_vec(&mut stream(seed, 0), n)))
}

/// Approximate draw for large n: latent field from a Vecchia factor with
/// `m_v` neighbours plus independent N(0, σ²) noise.
pub fn simulate_gp_vecchia(
    locs: &LocationSet,
    params: &CovParams,
    kernel: &KernelSpec,
    m_v: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let v = build_vecchia(locs, params, kernel, m_v, VecchiaOrdering::Random(seed))?;
    let mut y = v.sample(&mut stream(seed, 0));
    let noise = gaussian_vec(&mut stream(seed, 1), y.len());
    let s = params.sigma2.sqrt();
    y.iter_mut().zip(&noise).for_each(|(yi, e)| *yi += s * e);
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariogramBin {
    pub center: f64,
    /// ½ mean (yᵢ − yⱼ)² over pairs in the bin.
    pub gamma: f64,
    pub pairs: usize,
}

/// Empirical semivariogram on `bins` equal-width bins over (0, max_dist].
pub fn empirical_variogram(locs: &LocationSet, y: &[f64], bins: usize, max_dist: f64) -> Result<Vec<VariogramBin>> {
    crate::error::check_len("response", locs.len(), y.len())?;
    if bins == 0 || !(max_dist > 0.0) {
        return Err(GpError::Domain("variogram needs bins > 0 and max_dist > 0".into()));
    }
    let width = max_dist / bins as f64;
    let n = locs.len();
    // per-row partial sums combined in index order, so the result does not
    // depend on the thread count
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut s, mut c) = (vec![0.0; bins], vec![0usize; bins]);
            for j in i + 1..n {
                let d = locs.dist(i, j);
                if d > 0.0 && d <= max_dist {
                    let b = ((d / width) as usize).min(bins - 1);
                    s[b] += (y[i] - y[j]).powi(2);
                    c[b] += 1;
                }
            }
            (s, c)
        })
        .collect();
    let (mut sums, mut counts) = (vec![0.0; bins], vec![0usize; bins]);
    for (s, c) in &rows {
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    Ok((0..bins)
        .map(|b| VariogramBin {
            center: (b as f64 + 0.5) * width,
            gamma: if counts[b] > 0 { 0.5 * sums[b] / counts[b] as f64 } else { f64::NAN },
            pairs: counts[b],
        })
        .collect())
}

/// Model semivariogram σ² + σ₁²(1 − r(h)) for h > 0.
pub fn model_variogram(params: &CovParams, kernel: &KernelSpec, h: f64) -> f64 {
    params.sigma2 + params.sigma1_2 - kernel.cov(params, h)
}
