use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::centerpoint::PointSet;
use crate::exec::Exec;
use crate::geometry::{bisector_contains, PNorm};

/// A discarded bisector halfspace `H^p_{c, fc}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub c: Vec<f64>,
    pub fc: Vec<f64>,
    pub p: PNorm,
}

impl Cut {
    pub fn kills(&self, z: &[f64]) -> bool {
        if let PNorm::General(q) = self.p {
            // Compare sums of p-th powers, skipping both roots; fall back to
            // the normalised definition when a sum is too small to trust.
            let sc: f64 = self.c.iter().zip(z).map(|(a, b)| (a - b).abs().powf(q)).sum();
            let sf: f64 = self.fc.iter().zip(z).map(|(a, b)| (a - b).abs().powf(q)).sum();
            if sc.min(sf) > 1e-280 {
                return sc <= sf;
            }
        }
        bisector_contains(&self.c, &self.fc, z, self.p)
    }

    /// Whether the cut may kill anything in the box `[lo, hi]`: false only
    /// when every box point is strictly closer to `fc` than to `c`.
    fn touches_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        let near_c: Vec<f64> = (0..lo.len()).map(|i| self.c[i].clamp(lo[i], hi[i])).collect();
        let min_c = self.p.dist(&self.c, &near_c);
        let far: Vec<f64> = (0..lo.len())
            .map(|i| if (self.fc[i] - lo[i]).abs() >= (hi[i] - self.fc[i]).abs() { lo[i] } else { hi[i] })
            .collect();
        let max_fc = self.p.dist(&self.fc, &far);
        min_c <= max_fc
    }
}

/// Outcome of one discard.
#[derive(Clone, Debug, PartialEq)]
pub struct Discard {
    pub alive_before: usize,
    /// Row-major coordinates of the points that were killed.
    pub killed: Vec<f64>,
}

impl Discard {
    pub fn killed_count(&self, dim: usize) -> usize {
        self.killed.len() / dim
    }

    pub fn fraction(&self, dim: usize) -> f64 {
        if self.alive_before == 0 {
            0.0
        } else {
            self.killed_count(dim) as f64 / self.alive_before as f64
        }
    }
}

/// Point-cloud stand-in for the region not yet excluded.
///
/// Starts as `n` i.i.d. uniform points. Every discard records its cut, so
/// the cloud can later be refilled with fresh points that provably lie
/// outside all recorded cuts.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    dim: usize,
    seed: u64,
    points: Vec<f64>,
    alive: Vec<bool>,
    alive_count: usize,
    cuts: Vec<Cut>,
    refills: u64,
}

const REFILL_BLOCK: usize = 512;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SearchSpace {
    pub fn uniform(dim: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n * dim).map(|_| rng.random::<f64>()).collect();
        Self::from_flat(dim, points, seed)
    }

    pub fn from_flat(dim: usize, points: Vec<f64>, seed: u64) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim), "row-major points of dimension {dim}");
        let n = points.len() / dim;
        SearchSpace {
            dim,
            seed,
            points,
            alive: vec![true; n],
            alive_count: n,
            cuts: Vec::new(),
            refills: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn refills(&self) -> u64 {
        self.refills
    }

    pub fn alive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.alive[i]).collect()
    }

    /// Up to `k` alive points chosen uniformly without replacement.
    pub fn sample_alive(&self, k: usize, seed: u64) -> Option<PointSet> {
        let alive = self.alive_indices();
        if alive.is_empty() {
            return None;
        }
        let chosen: Vec<usize> = if alive.len() <= k {
            alive
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pick = index::sample(&mut rng, alive.len(), k).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|j| alive[j]).collect()
        };
        let mut coords = Vec::with_capacity(chosen.len() * self.dim);
        for i in chosen {
            coords.extend_from_slice(self.point(i));
        }
        PointSet::from_flat(self.dim, coords).ok()
    }

    /// Kills every alive point in `H^p_{c, fc}` and records the cut.
    pub fn discard(&mut self, c: &[f64], fc: &[f64], p: PNorm, exec: Exec) -> Discard {
        let cut = Cut { c: c.to_vec(), fc: fc.to_vec(), p };
        let alive_before = self.alive_count;
        let mask = exec.map(self.len(), |i| self.alive[i] && cut.kills(self.point(i)));
        let mut killed = Vec::new();
        for (i, dead) in mask.into_iter().enumerate() {
            if dead {
                self.alive[i] = false;
                killed.extend_from_slice(&self.points[i * self.dim..(i + 1) * self.dim]);
            }
        }
        self.alive_count -= killed.len() / self.dim;
        self.cuts.push(cut);
        Discard { alive_before, killed }
    }

    /// Drops dead points and tops the alive set back up to `target` with
    /// points jittered around alive ones, rejecting anything outside the cube
    /// or inside a recorded cut. The jitter half-width per axis is the alive
    /// spread divided by `alive^(1/d)`, but never below `min_jitter`.
    ///
    /// Returns the number of points added; fewer than requested if the
    /// rejection rate is extreme. Deterministic in `seed` and the history.
    pub fn refill(&mut self, target: usize, min_jitter: f64, exec: Exec) -> usize {
        let d = self.dim;
        let seeds: Vec<f64> = self.alive_indices().into_iter().flat_map(|i| self.point(i).to_vec()).collect();
        let n_alive = seeds.len() / d;
        self.points = seeds;
        self.alive = vec![true; n_alive];
        self.alive_count = n_alive;
        if n_alive == 0 || n_alive >= target {
            return 0;
        }
        self.refills += 1;

        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for z in self.points.chunks_exact(d) {
            for i in 0..d {
                lo[i] = lo[i].min(z[i]);
                hi[i] = hi[i].max(z[i]);
            }
        }
        let shrink = (n_alive as f64).powf(-1.0 / d as f64);
        let h: Vec<f64> = (0..d).map(|i| ((hi[i] - lo[i]) * shrink).max(min_jitter)).collect();
        let box_lo: Vec<f64> = (0..d).map(|i| (lo[i] - h[i]).max(0.0)).collect();
        let box_hi: Vec<f64> = (0..d).map(|i| (hi[i] + h[i]).min(1.0)).collect();
        let cuts: Vec<&Cut> = self.cuts.iter().rev().filter(|c| c.touches_box(&box_lo, &box_hi)).collect();

        let need = target - n_alive;
        let max_blocks = (64 * need).div_ceil(REFILL_BLOCK);
        let round = mix(self.seed ^ mix(self.refills));
        let mut fresh: Vec<f64> = Vec::with_capacity(need * d);
        let mut next_block = 0usize;
        while fresh.len() < need * d && next_block < max_blocks {
            let missing = need - fresh.len() / d;
            let blocks = missing.div_ceil(REFILL_BLOCK).clamp(1, max_blocks - next_block);
            let seeds = &self.points;
            let batch = exec.map_tasks(blocks, |b| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(round ^ (next_block + b) as u64));
                let mut out = Vec::new();
                let mut z = vec![0.0; d];
                for _ in 0..REFILL_BLOCK {
                    let s = rng.random_range(0..n_alive);
                    let mut inside = true;
                    for i in 0..d {
                        z[i] = seeds[s * d + i] + rng.random_range(-h[i]..h[i]);
                        inside &= (0.0..=1.0).contains(&z[i]);
                    }
                    if inside && !cuts.iter().any(|c| c.kills(&z)) {
                        out.extend_from_slice(&z);
                    }
                }
                out
            });
            next_block += blocks;
            for chunk in batch {
                fresh.extend(chunk);
            }
        }
        fresh.truncate(need * d);
        let added = fresh.len() / d;
        self.points.extend(fresh);
        self.alive.resize(n_alive + added, true);
        self.alive_count += added;
        added
    }
}

/// Kills the alive points of `space` inside `H^p_{c, fc}`; returns the
/// fraction of previously alive points killed (0 when nothing was alive).
pub fn discard_halfspace(space: &mut SearchSpace, c: &[f64], fc: &[f64], p: PNorm, exec: Exec) -> f64 {
    let d = space.dim();
    space.discard(c, fc, p, exec).fraction(d)
}
