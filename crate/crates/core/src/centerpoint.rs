//! Approximate lp-centerpoints of finite point sets.
//!
//! A candidate `c` is certified against a finite [`DirectionSample`]: its
//! quality is the smallest fraction of the set captured by a limit halfspace
//! `H^p_{c,v}` over the sampled `v`. Nothing is claimed for directions outside
//! the sample.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{in_unit_cube, PNorm, Point, Subdifferential};
use crate::grid::{GridError, GridPoint, MAX_GRID_BITS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CenterpointError {
    #[error("point set is empty")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coordinate in point set")]
    NonFinite,
    #[error("rho_min must lie in (0, 1/(d+1)], got {0}")]
    InvalidRhoMin(f64),
    #[error("direction sample needs at least 2d = {min} directions, got {found}")]
    TooFewDirections { min: usize, found: usize },
    #[error("extra direction must be non-zero and finite")]
    ZeroDirection,
    #[error("no candidate reached rho_min = {rho_min}; best quality was {}", best.quality)]
    NoCandidateReached { rho_min: f64, best: Box<CenterpointCertificate> },
    #[error("point lies outside the unit cube")]
    OutsideUnitCube,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A finite point set without duplicates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    /// Builds a set from row-major coordinates, dropping exact duplicates
    /// (first occurrence wins; `-0.0` equals `0.0`).
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self, CenterpointError> {
        if dim == 0 || coords.is_empty() {
            return Err(CenterpointError::EmptySet);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(CenterpointError::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CenterpointError::NonFinite);
        }
        let mut seen = HashSet::with_capacity(coords.len() / dim);
        let mut out = Vec::with_capacity(coords.len());
        for row in coords.chunks_exact(dim) {
            let key: Vec<u64> = row.iter().map(|&c| (c + 0.0).to_bits()).collect();
            if seen.insert(key) {
                out.extend_from_slice(row);
            }
        }
        Ok(PointSet { dim, coords: out })
    }

    pub fn from_points(points: &[Point]) -> Result<Self, CenterpointError> {
        let dim = points.first().ok_or(CenterpointError::EmptySet)?.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(CenterpointError::DimensionMismatch { expected: dim, found: p.dim() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    /// Coordinate-wise minimum and maximum.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for z in self.iter() {
            for i in 0..self.dim {
                lo[i] = lo[i].min(z[i]);
                hi[i] = hi[i].max(z[i]);
            }
        }
        (lo, hi)
    }

    /// Coordinate-wise median; the two middle values are averaged for even sizes.
    pub fn coordinate_median(&self) -> Point {
        let n = self.len();
        let mut col = Vec::with_capacity(n);
        let coords = (0..self.dim)
            .map(|i| {
                col.clear();
                col.extend(self.iter().map(|z| z[i]));
                col.sort_unstable_by(f64::total_cmp);
                if n % 2 == 1 {
                    col[n / 2]
                } else {
                    let (a, b) = (col[n / 2 - 1], col[n / 2]);
                    (a + (b - a) / 2.0).clamp(a, b)
                }
            })
            .collect();
        Point::new(coords).expect("median of finite points is finite")
    }

    pub fn centroid(&self) -> Point {
        let (lo, hi) = self.bounding_box();
        let n = self.len() as f64;
        let coords = (0..self.dim)
            .map(|i| (self.iter().map(|z| z[i]).sum::<f64>() / n).clamp(lo[i], hi[i]))
            .collect();
        Point::new(coords).expect("centroid of finite points is finite")
    }

    /// The subset at `indices`, in that order.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> PointSet {
        let mut coords = Vec::new();
        for i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { dim: self.dim, coords }
    }
}

/// Unit directions used as a finite proxy for the whole sphere.
///
/// The first `2d` entries are always `+e_1, -e_1, ..., +e_d, -e_d`; the rest
/// are Gaussian-normalised draws from a ChaCha8 stream seeded with `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    dim: usize,
    seed: u64,
    dirs: Vec<f64>,
}

impl DirectionSample {
    pub fn default_count(dim: usize) -> usize {
        64 * dim
    }

    pub fn new(dim: usize, count: usize, seed: u64) -> Result<Self, CenterpointError> {
        Self::build(dim, count, seed, false)
    }

    /// Like `new`, but every random direction is immediately followed by its
    /// negation, so the sample is closed under `v -> -v`.
    pub fn symmetric(dim: usize, count: usize, seed: u64) -> Result<Self, CenterpointError> {
        Self::build(dim, count, seed, true)
    }

    fn build(dim: usize, count: usize, seed: u64, symmetric: bool) -> Result<Self, CenterpointError> {
        if dim == 0 {
            return Err(CenterpointError::EmptySet);
        }
        if count < 2 * dim {
            return Err(CenterpointError::TooFewDirections { min: 2 * dim, found: count });
        }
        let mut dirs = Vec::with_capacity(count * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                dirs.extend((0..dim).map(|j| if j == i { s } else { 0.0 }));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; dim];
        let mut have = 2 * dim;
        while have < count {
            loop {
                for x in v.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                let n = PNorm::Two.norm(&v);
                if n > 1e-9 {
                    v.iter_mut().for_each(|x| *x /= n);
                    break;
                }
            }
            dirs.extend_from_slice(&v);
            have += 1;
            if symmetric && have < count {
                dirs.extend(v.iter().map(|x| -x));
                have += 1;
            }
        }
        Ok(DirectionSample { dim, seed, dirs })
    }

    /// Appends `dir / ||dir||_2`.
    pub fn with_extra(mut self, dir: &[f64]) -> Result<Self, CenterpointError> {
        if dir.len() != self.dim {
            return Err(CenterpointError::DimensionMismatch { expected: self.dim, found: dir.len() });
        }
        let n = PNorm::Two.norm(dir);
        if n == 0.0 || !n.is_finite() {
            return Err(CenterpointError::ZeroDirection);
        }
        self.dirs.extend(dir.iter().map(|x| x / n));
        Ok(self)
    }

    /// The first `count` directions (at least the axis block).
    pub fn truncated(&self, count: usize) -> DirectionSample {
        let count = count.clamp(2 * self.dim, self.len());
        DirectionSample {
            dim: self.dim,
            seed: self.seed,
            dirs: self.dirs[..count * self.dim].to_vec(),
        }
    }

    fn negated(&self) -> DirectionSample {
        DirectionSample {
            dim: self.dim,
            seed: self.seed,
            dirs: self.dirs.iter().map(|x| -x).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.dirs[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.dirs.chunks_exact(self.dim)
    }
}

/// Sampled-direction certificate for a candidate centerpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterpointCertificate {
    pub candidate: Point,
    /// `min_count / set_size`.
    pub quality: f64,
    pub min_count: usize,
    pub worst_dir: Vec<f64>,
    pub set_size: usize,
    pub sample_seed: u64,
    pub sample_len: usize,
}

/// For every sampled `v`, the number of `z` in `points` with `z` in `H^p_{c,v}`.
pub fn direction_counts(
    points: &PointSet,
    c: &[f64],
    p: PNorm,
    sample: &DirectionSample,
    exec: Exec,
) -> Vec<u32> {
    let d = points.dim();
    let k = sample.len();
    exec.fold_ranges(
        points.len(),
        || vec![0u32; k],
        |mut acc, range| {
            let mut sub = Subdifferential::default();
            let mut w = vec![0.0; d];
            for i in range {
                for ((wi, z), ci) in w.iter_mut().zip(points.point(i)).zip(c) {
                    *wi = z - ci;
                }
                if !sub.reset(&w, p) {
                    acc.iter_mut().for_each(|a| *a += 1);
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(sample.iter()) {
                    *a += u32::from(sub.support(v) >= 0.0);
                }
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
}

fn check_inputs(points: &PointSet, c: &[f64], sample: &DirectionSample) -> Result<(), CenterpointError> {
    if points.is_empty() {
        return Err(CenterpointError::EmptySet);
    }
    for found in [c.len(), sample.dim()] {
        if found != points.dim() {
            return Err(CenterpointError::DimensionMismatch { expected: points.dim(), found });
        }
    }
    Ok(())
}

/// Certificate for `c` over `sample`. The worst direction is the first
/// minimiser in sample order, so the result is fully deterministic.
pub fn centerpoint_quality(
    points: &PointSet,
    c: &[f64],
    p: PNorm,
    sample: &DirectionSample,
    exec: Exec,
) -> Result<CenterpointCertificate, CenterpointError> {
    check_inputs(points, c, sample)?;
    let counts = direction_counts(points, c, p, sample, exec);
    Ok(certificate_from_counts(points, c, sample, &counts))
}

fn certificate_from_counts(
    points: &PointSet,
    c: &[f64],
    sample: &DirectionSample,
    counts: &[u32],
) -> CenterpointCertificate {
    let (j, &min) = counts
        .iter()
        .enumerate()
        .min_by_key(|&(j, &n)| (n, j))
        .expect("sample is never empty");
    CenterpointCertificate {
        candidate: Point::new(c.to_vec()).expect("candidate is finite"),
        quality: min as f64 / points.len() as f64,
        min_count: min as usize,
        worst_dir: sample.get(j).to_vec(),
        set_size: points.len(),
        sample_seed: sample.seed(),
        sample_len: sample.len(),
    }
}

/// Cheap pre-selection for [`find_centerpoint`]: score the slate on a strided
/// subset with a prefix of the sample, then certify only the `keep` best.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub points: usize,
    pub dirs: usize,
    pub keep: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinderConfig {
    /// Random members of the set added to the slate.
    pub random_candidates: usize,
    pub push_tol: f64,
    pub push_max_iters: usize,
    pub screening: Option<Screening>,
    pub seed: u64,
}

impl Default for FinderConfig {
    fn default() -> Self {
        FinderConfig {
            random_candidates: 32,
            push_tol: 1e-6,
            push_max_iters: 500,
            screening: None,
            seed: 0,
        }
    }
}

/// `1/(2(d+1))`.
pub fn default_rho_min(d: usize) -> f64 {
    1.0 / (2.0 * (d as f64 + 1.0))
}

/// The slate, in tie-breaking order: coordinate-wise median, centroid, the
/// push-map endpoint started at the median, then random members of the set.
fn slate(
    points: &PointSet,
    p: PNorm,
    push_sample: &DirectionSample,
    push_points: &PointSet,
    config: &FinderConfig,
    exec: Exec,
) -> Vec<Point> {
    let median = points.coordinate_median();
    let mut out = vec![median.clone(), points.centroid()];
    if config.push_max_iters > 0 {
        let t = push_map_iterate(&median, push_points, p, push_sample, config.push_tol, config.push_max_iters, exec);
        out.push(t.endpoint);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.random_candidates.min(points.len());
    for i in index::sample(&mut rng, points.len(), k) {
        out.push(Point::new(points.point(i).to_vec()).expect("finite"));
    }
    out
}

fn strided(points: &PointSet, m: usize) -> PointSet {
    let n = points.len();
    if m >= n {
        return points.clone();
    }
    points.select((0..m).map(|i| i * n / m))
}

/// Best certificate over the candidate slate, or `NoCandidateReached`
/// carrying it when its quality is below `rho_min`.
pub fn find_centerpoint(
    points: &PointSet,
    p: PNorm,
    sample: &DirectionSample,
    rho_min: f64,
    config: &FinderConfig,
    exec: Exec,
) -> Result<CenterpointCertificate, CenterpointError> {
    if points.is_empty() {
        return Err(CenterpointError::EmptySet);
    }
    let d = points.dim();
    if sample.dim() != d {
        return Err(CenterpointError::DimensionMismatch { expected: d, found: sample.dim() });
    }
    if !(rho_min > 0.0 && rho_min <= 1.0 / (d as f64 + 1.0)) {
        return Err(CenterpointError::InvalidRhoMin(rho_min));
    }

    let screen = config
        .screening
        .map(|s| (strided(points, s.points.max(1)), sample.truncated(s.dirs), s.keep.max(1)));
    let (push_points, push_sample) = match &screen {
        Some((pts, dirs, _)) => (pts, dirs),
        None => (points, sample),
    };
    let candidates = slate(points, p, push_sample, push_points, config, exec);

    let finalists: Vec<usize> = match &screen {
        None => (0..candidates.len()).collect(),
        Some((pts, dirs, keep)) => {
            let scores = exec.map_tasks(candidates.len(), |i| {
                let counts = direction_counts(pts, &candidates[i], p, dirs, Exec::Serial);
                *counts.iter().min().expect("non-empty")
            });
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by_key(|&i| (std::cmp::Reverse(scores[i]), i));
            order.truncate(*keep);
            order.sort_unstable();
            order
        }
    };

    let certs = exec.map_tasks(finalists.len(), |i| {
        let c = &candidates[finalists[i]];
        let counts = direction_counts(points, c, p, sample, Exec::Serial);
        certificate_from_counts(points, c, sample, &counts)
    });
    let best = certs
        .into_iter()
        .reduce(|best, c| if c.min_count > best.min_count { c } else { best })
        .expect("slate is never empty");
    if best.quality >= rho_min {
        Ok(best)
    } else {
        Err(CenterpointError::NoCandidateReached { rho_min, best: Box::new(best) })
    }
}

/// One step of the sampled push map
/// `x + (1/K) sum_v v max(1/(d+1) - frac(H^p_{x,-v}), 0)`, clamped to the
/// bounding box of `points`.
pub fn push_map_step(x: &[f64], points: &PointSet, p: PNorm, sample: &DirectionSample, exec: Exec) -> Point {
    let d = points.dim();
    let counts = direction_counts(points, x, p, &sample.negated(), exec);
    let target = 1.0 / (d as f64 + 1.0);
    let n = points.len() as f64;
    let k = sample.len() as f64;
    let mut delta = vec![0.0; d];
    for (v, &cnt) in sample.iter().zip(&counts) {
        let deficit = (target - cnt as f64 / n).max(0.0);
        if deficit > 0.0 {
            for (a, vi) in delta.iter_mut().zip(v) {
                *a += vi * deficit;
            }
        }
    }
    let (lo, hi) = points.bounding_box();
    let coords = (0..d)
        .map(|i| (x[i] + delta[i] / k).clamp(lo[i], hi[i]))
        .collect();
    Point::new(coords).expect("push step stays finite")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushTrajectory {
    pub endpoint: Point,
    pub iterations: usize,
    /// Euclidean length of the last step taken.
    pub last_step: f64,
    pub converged: bool,
}

/// Repeats [`push_map_step`] until a step is shorter than `tol` or
/// `max_iters` steps were taken.
pub fn push_map_iterate(
    x0: &[f64],
    points: &PointSet,
    p: PNorm,
    sample: &DirectionSample,
    tol: f64,
    max_iters: usize,
    exec: Exec,
) -> PushTrajectory {
    let mut x = Point::new(x0.to_vec()).expect("finite start");
    let mut last_step = f64::INFINITY;
    for it in 0..max_iters {
        let next = push_map_step(&x, points, p, sample, exec);
        last_step = PNorm::Two.dist(&next, &x);
        x = next;
        if last_step < tol {
            return PushTrajectory { endpoint: x, iterations: it + 1, last_step, converged: true };
        }
    }
    PushTrajectory { endpoint: x, iterations: max_iters, last_step, converged: false }
}

/// Coordinate-wise nearest point of `G^d_b`, rounding exact half-spacings up.
pub fn round_centerpoint_to_grid_l1(c: &[f64], bits: u32) -> Result<GridPoint, CenterpointError> {
    if bits == 0 || bits > MAX_GRID_BITS {
        return Err(GridError::InvalidBits(bits).into());
    }
    if c.is_empty() || !in_unit_cube(c) {
        return Err(CenterpointError::OutsideUnitCube);
    }
    let scale = (bits as f64).exp2();
    let k = c
        .iter()
        .map(|&ci| {
            let x = ci * scale;
            let f = x.floor();
            (f as u64) + u64::from(x - f >= 0.5)
        })
        .collect();
    Ok(GridPoint::new(k, bits)?)
}

/// `{0, e_1, ..., e_d}`.
pub fn tightness_instance(d: usize) -> PointSet {
    assert!(d >= 1, "dimension must be positive");
    let mut coords = vec![0.0; d];
    for i in 0..d {
        coords.extend((0..d).map(|j| if j == i { 1.0 } else { 0.0 }));
    }
    PointSet::from_flat(d, coords).expect("distinct points")
}
