//! Inducing-point selection: uniform random subsets and kmeans++ with Lloyd
//! refinement, snapped back onto distinct data locations.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GpError, Result};
use crate::kernels::locations::{sq_euclid, KdTree, LocationSet};

const LLOYD_MAX_ITERS: usize = 20;
const LLOYD_REL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct InducingSet {
    pub locs: LocationSet,
    /// Data rows the points were taken from.
    pub source: Option<Vec<usize>>,
}

impl InducingSet {
    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }

    pub fn from_indices(locs: &LocationSet, idx: Vec<usize>) -> Result<Self> {
        Ok(Self {
            locs: locs.subset(&idx)?,
            source: Some(idx),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InducingMethod {
    Random,
    #[default]
    KmeansPlusPlus,
}

impl InducingMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "kmeans++" | "kmeanspp" | "kmeans" => Ok(Self::KmeansPlusPlus),
            _ => Err(GpError::Config(format!("unknown inducing-point method '{s}' (random, kmeans++)"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::KmeansPlusPlus => "kmeans++",
        }
    }
}

pub fn select(locs: &LocationSet, m: usize, method: InducingMethod, seed: u64) -> Result<InducingSet> {
    match method {
        InducingMethod::Random => select_random(locs, m, seed),
        InducingMethod::KmeansPlusPlus => select_kmeanspp(locs, m, LLOYD_MAX_ITERS, seed),
    }
}

fn check_m(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(GpError::Domain(format!(
            "number of inducing points must be in 1..={n}, got {m}"
        )));
    }
    Ok(())
}

pub fn select_random(locs: &LocationSet, m: usize, seed: u64) -> Result<InducingSet> {
    check_m(locs.len(), m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, locs.len(), m).into_vec();
    idx.sort_unstable();
    InducingSet::from_indices(locs, idx)
}

/// Indices of the first occurrence of every distinct location.
fn distinct_rows(locs: &LocationSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..locs.len()).collect();
    let key = |i: usize| -> Vec<u64> { locs.point(i).iter().map(|x| (x + 0.0).to_bits()).collect() };
    order.sort_by_key(|&i| (key(i), i));
    let mut out = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        if k == 0 || key(order[k - 1]) != key(i) {
            out.push(i);
        }
    }
    out.sort_unstable();
    out
}

/// Result of the unsnapped clustering, exposed for diagnostics.
#[derive(Clone, Debug)]
pub struct KmeansOutcome {
    pub centroids: LocationSet,
    /// Within-cluster sum of squares after seeding and after each Lloyd step.
    pub sse_trace: Vec<f64>,
}

/// kmeans++ seeding followed by Lloyd iterations on the distinct locations.
pub fn kmeanspp_centroids(
    locs: &LocationSet,
    m: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KmeansOutcome> {
    check_m(locs.len(), m)?;
    let pts = locs.subset(&distinct_rows(locs))?;
    let n = pts.len();
    if m > n {
        return Err(GpError::Domain(format!(
            "only {n} distinct locations available for {m} inducing points"
        )));
    }
    let d = pts.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_euclid(pts.point(i), pts.point(chosen[0])))
        .collect();
    while chosen.len() < m {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(&mut rng),
            // all remaining mass zero: every point coincides with a centre
            Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("m <= distinct n"),
        };
        chosen.push(next);
        for (i, di) in d2.iter_mut().enumerate() {
            *di = di.min(sq_euclid(pts.point(i), pts.point(next)));
        }
    }

    let mut cent: Vec<f64> = chosen.iter().flat_map(|&i| pts.point(i).to_vec()).collect();
    let mut trace = Vec::new();
    let mut assign = vec![0usize; n];
    let assign_step = |cent: &[f64], assign: &mut [usize]| -> Result<f64> {
        let cl = LocationSet::new(cent.to_vec(), d)?;
        let tree = KdTree::new(&cl);
        let mut sse = 0.0;
        for (i, a) in assign.iter_mut().enumerate() {
            let j = tree.knn(pts.point(i), 1)[0];
            *a = j;
            sse += sq_euclid(pts.point(i), cl.point(j));
        }
        Ok(sse)
    };
    let mut sse = assign_step(&cent, &mut assign)?;
    trace.push(sse);
    for _ in 0..max_iters {
        let mut sums = vec![0.0; m * d];
        let mut counts = vec![0usize; m];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for k in 0..d {
                sums[a * d + k] += pts.point(i)[k];
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                for k in 0..d {
                    cent[c * d + k] = sums[c * d + k] / counts[c] as f64;
                }
            }
        }
        let new_sse = assign_step(&cent, &mut assign)?;
        trace.push(new_sse);
        let rel = if sse > 0.0 { (sse - new_sse).abs() / sse } else { 0.0 };
        sse = new_sse;
        if rel < LLOYD_REL_TOL {
            break;
        }
    }
    Ok(KmeansOutcome {
        centroids: LocationSet::new(cent, d)?,
        sse_trace: trace,
    })
}

pub fn select_kmeanspp(locs: &LocationSet, m: usize, max_iters: usize, seed: u64) -> Result<InducingSet> {
    let out = kmeanspp_centroids(locs, m, max_iters, seed)?;
    let distinct = distinct_rows(locs);
    let mut is_distinct = vec![false; locs.len()];
    for &i in &distinct {
        is_distinct[i] = true;
    }
    let tree = KdTree::new(locs);
    let mut taken = vec![false; locs.len()];
    let mut idx = Vec::with_capacity(m);
    for c in 0..m {
        let q = out.centroids.point(c);
        let j = tree.knn_filtered(q, 1, |i| is_distinct[i] && !taken[i])[0];
        taken[j] = true;
        idx.push(j);
    }
    InducingSet::from_indices(locs, idx)
}
