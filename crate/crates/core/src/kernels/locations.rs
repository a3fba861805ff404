use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{GpError, Result};

/// `n` points in R^d, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationSet {
    coords: Vec<f64>,
    n: usize,
    d: usize,
}

impl LocationSet {
    pub fn new(coords: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(GpError::Domain("location dimension must be >= 1".into()));
        }
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(GpError::Domain(format!(
                "coordinate buffer of length {} is not a nonempty multiple of d = {d}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GpError::Domain("coordinates must be finite".into()));
        }
        let n = coords.len() / d;
        Ok(Self { coords, n, d })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(GpError::Domain("points have inconsistent dimension".into()));
        }
        Self::new(points.concat(), d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        euclid(self.point(i), self.point(j))
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut c = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            c.extend_from_slice(self.point(i));
        }
        Self::new(c, self.d)
    }

    /// Per-axis (min, max).
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.d)
            .map(|k| {
                (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.coords[i * self.d + k];
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounding_box()
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
pub fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    sq_euclid(a, b).sqrt()
}

/// Uniform grid binning for fixed-radius queries.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cell: f64,
    origin: Vec<f64>,
    bins: HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    pub fn new(locs: &LocationSet, cell: f64) -> Self {
        let origin: Vec<f64> = locs.bounding_box().iter().map(|b| b.0).collect();
        let mut bins: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let mut idx = Self {
            cell,
            origin,
            bins: HashMap::new(),
        };
        for i in 0..locs.len() {
            bins.entry(idx.key(locs.point(i))).or_default().push(i);
        }
        idx.bins = bins;
        idx
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter()
            .zip(&self.origin)
            .map(|(x, o)| ((x - o) / self.cell).floor() as i64)
            .collect()
    }

    /// Indices of all points strictly within `r` of `q`, ascending.
    pub fn within(&self, locs: &LocationSet, q: &[f64], r: f64) -> Vec<usize> {
        let reach = (r / self.cell).ceil().max(1.0) as i64;
        let center = self.key(q);
        let d = center.len();
        let r2 = r * r;
        let mut out = Vec::new();
        let mut offs = vec![-reach; d];
        loop {
            let key: Vec<i64> = center.iter().zip(&offs).map(|(c, o)| c + o).collect();
            if let Some(pts) = self.bins.get(&key) {
                out.extend(
                    pts.iter()
                        .copied()
                        .filter(|&j| sq_euclid(locs.point(j), q) < r2),
                );
            }
            // odometer over the (2·reach+1)^d neighbourhood
            let mut k = 0;
            loop {
                if k == d {
                    out.sort_unstable();
                    return out;
                }
                offs[k] += 1;
                if offs[k] <= reach {
                    break;
                }
                offs[k] = -reach;
                k += 1;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct KdNode {
    lo: usize,
    hi: usize,
    axis: usize,
    split: f64,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static k-d tree over a `LocationSet` for k-nearest queries.
#[derive(Clone, Debug)]
pub struct KdTree<'a> {
    locs: &'a LocationSet,
    perm: Vec<usize>,
    nodes: Vec<KdNode>,
}

const LEAF: usize = 12;

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(locs: &'a LocationSet) -> Self {
        let mut t = Self {
            locs,
            perm: (0..locs.len()).collect(),
            nodes: Vec::new(),
        };
        t.build(0, locs.len());
        t
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            lo,
            hi,
            axis: 0,
            split: 0.0,
            left: None,
            right: None,
        });
        if hi - lo <= LEAF {
            return id;
        }
        let d = self.locs.dim();
        let axis = (0..d)
            .map(|k| {
                let (mn, mx) = self.perm[lo..hi].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b), &i| {
                        let v = self.locs.point(i)[k];
                        (a.min(v), b.max(v))
                    },
                );
                (mx - mn, k)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(0, |x| x.1);
        let mid = (lo + hi) / 2;
        let locs = self.locs;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            locs.point(a)[axis].total_cmp(&locs.point(b)[axis])
        });
        let split = locs.point(self.perm[mid])[axis];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.left = Some(left);
        node.right = Some(right);
        id
    }

    /// The `k` nearest points to `q` among those accepted by `keep`, sorted by
    /// distance (ties by index).
    pub fn knn_filtered<F: Fn(usize) -> bool>(&self, q: &[f64], k: usize, keep: F) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &keep, &mut heap);
        let mut v = heap.into_vec();
        v.sort();
        v.into_iter().map(|c| c.1).collect()
    }

    pub fn knn(&self, q: &[f64], k: usize) -> Vec<usize> {
        self.knn_filtered(q, k, |_| true)
    }

    fn search<F: Fn(usize) -> bool>(
        &self,
        id: usize,
        q: &[f64],
        k: usize,
        keep: &F,
        heap: &mut BinaryHeap<Cand>,
    ) {
        let node = &self.nodes[id];
        match (node.left, node.right) {
            (Some(l), Some(r)) => {
                let diff = q[node.axis] - node.split;
                let (near, far) = if diff < 0.0 { (l, r) } else { (r, l) };
                self.search(near, q, k, keep, heap);
                if heap.len() < k || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.0) {
                    self.search(far, q, k, keep, heap);
                }
            }
            _ => {
                for &i in &self.perm[node.lo..node.hi] {
                    if !keep(i) {
                        continue;
                    }
                    let c = Cand(sq_euclid(self.locs.point(i), q), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
        }
    }
}
