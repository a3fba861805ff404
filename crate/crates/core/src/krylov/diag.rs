use rayon::prelude::*;

use crate::error::Result;
use crate::random::{rademacher_vec, stream};

/// Rademacher estimate (1/ℓ) Σᵢ zᵢ ∘ (op zᵢ) of diag(op) for a symmetric map
/// on ℝⁿ. Probe i uses stream `(seed, i)`.
pub fn stochastic_diag<F>(op: F, n: usize, num_probes: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let samples = stochastic_diag_samples(op, n, num_probes, seed)?;
    let mut d = vec![0.0; n];
    for s in &samples {
        d.iter_mut().zip(s).for_each(|(di, si)| *di += si);
    }
    d.iter_mut().for_each(|x| *x /= num_probes.max(1) as f64);
    Ok(d)
}

/// Individual terms zᵢ ∘ (op zᵢ).
pub fn stochastic_diag_samples<F>(op: F, n: usize, num_probes: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    (0..num_probes)
        .into_par_iter()
        .map(|i| {
            let z = rademacher_vec(&mut stream(seed, i as u64), n);
            let mut y = op(&z)?;
            y.iter_mut().zip(&z).for_each(|(yi, zi)| *yi *= zi);
            Ok(y)
        })
        .collect()
}
