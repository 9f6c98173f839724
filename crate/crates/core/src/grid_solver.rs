//! The l1 grid solver: centerpoint cutting over the explicit grid `G^d_b`
//! with queries rounded onto the grid, ending either in a grid
//! `epsilon`-fixpoint or in a verified violation certificate.

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centerpoint::{
    default_rho_min, find_centerpoint, round_centerpoint_to_grid_l1, CenterpointError, DirectionSample,
    FinderConfig, PointSet, Screening,
};
use crate::exec::Exec;
use crate::geometry::{bisector_contains, in_unit_cube, PNorm};
use crate::grid::{min_grid_resolution, Grid, GridError, GridPoint};
use crate::oracles::{CountingOracle, Oracle, OracleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridSolveError {
    #[error("b = {bits} is below the required resolution {required}")]
    ResolutionTooCoarse { bits: u32, required: u32 },
    #[error("query budget of {queries} exhausted with {alive} grid points still alive and no fixpoint")]
    CertificateIncomplete { queries: usize, alive: usize, trace: Vec<GridIterationRecord> },
    #[error("assembled certificate failed verification")]
    CertificateInvalid,
    #[error("oracle returned {response:?} for grid point {query:?}, outside [0,1]^d")]
    MalformedOracle { query: Vec<u64>, response: Vec<f64> },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Centerpoint(#[from] CenterpointError),
}

/// One queried grid point with its oracle answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub x: Vec<u64>,
    pub b: u32,
    pub fx: Vec<f64>,
}

impl CertificateEntry {
    pub fn coords(&self) -> Vec<f64> {
        let scale = (-(self.b as f64)).exp2();
        self.x.iter().map(|&k| k as f64 * scale).collect()
    }
}

/// Queried pairs whose l1 bisector halfspaces `H^1_{x, f(x)}` are claimed to
/// cover the whole grid. Serialises as a bare JSON array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViolationCertificate(pub Vec<CertificateEntry>);

/// Checks coverage of `G^d_b` by full enumeration. Empty certificates never
/// cover anything.
pub fn verify_violation_certificate(
    cert: &ViolationCertificate,
    d: usize,
    b: u32,
    exec: Exec,
) -> Result<bool, GridError> {
    let grid = Grid::new(d, b)?;
    let n = grid.enumerable_size()?;
    if let Some(e) = cert.0.iter().find(|e| e.x.len() != d || e.fx.len() != d) {
        return Err(GridError::DimensionMismatch { expected: d, found: e.x.len().min(e.fx.len()) });
    }
    if cert.0.is_empty() {
        return Ok(false);
    }
    let pairs: Vec<(Vec<f64>, &[f64])> = cert.0.iter().map(|e| (e.coords(), e.fx.as_slice())).collect();
    Ok(exec.fold_ranges(
        n as usize,
        || true,
        |ok, range| {
            if !ok {
                return false;
            }
            let mut z = vec![0.0; d];
            range.into_iter().all(|i| {
                grid.coords_into(i as u64, &mut z);
                pairs.iter().any(|(x, fx)| bisector_contains(x, fx, &z, PNorm::One))
            })
        },
        |a, b| a && b,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSolveParams {
    pub dirs: usize,
    pub rho_min: f64,
    /// `None` means `4 ceil(ln|G| / ln(1/(1 - rho_min))) + 1`.
    pub max_queries: Option<usize>,
    pub seed: u64,
    pub search_sample: usize,
    /// Refuse `b < min_grid_resolution`. Only switched off to exercise the
    /// certificate path on deliberately coarse grids.
    pub enforce_resolution: bool,
    pub finder: FinderConfig,
    pub exec: Exec,
}

impl GridSolveParams {
    pub fn new(d: usize) -> Self {
        GridSolveParams {
            dirs: DirectionSample::default_count(d),
            rho_min: default_rho_min(d),
            max_queries: None,
            seed: 0,
            search_sample: 1024,
            enforce_resolution: true,
            finder: FinderConfig {
                random_candidates: 32,
                push_tol: 1e-6,
                push_max_iters: 16,
                screening: Some(Screening { points: 256, dirs: 16 * d, keep: 3 }),
                seed: 0,
            },
            exec: Exec::default(),
        }
    }

    fn budget(&self, grid_size: u64) -> usize {
        self.max_queries.unwrap_or_else(|| {
            let k = (grid_size as f64).ln() / -(1.0 - self.rho_min).ln();
            4 * k.ceil().max(1.0) as usize + 1
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridIterationRecord {
    pub iter: usize,
    pub query: Vec<u64>,
    pub residual: f64,
    pub alive_before: usize,
    pub alive_after: usize,
    pub achieved_rho: f64,
    /// The rounded centerpoint had been queried already, so the nearest
    /// alive grid point was queried instead.
    pub rounding_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridOutcome {
    FoundFixpoint { x: GridPoint, residual: f64 },
    Certificate { certificate: ViolationCertificate },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub outcome: GridOutcome,
    pub trace: Vec<GridIterationRecord>,
    pub queries_used: usize,
    pub grid: Grid,
}

fn l1_nearest(grid: &Grid, alive: &[u32], c: &[f64]) -> u32 {
    let mut z = vec![0.0; grid.dim()];
    let mut best = (f64::INFINITY, alive[0]);
    for &i in alive {
        grid.coords_into(i as u64, &mut z);
        let dist = PNorm::One.dist(&z, c);
        if dist < best.0 {
            best = (dist, i);
        }
    }
    best.1
}

/// Runs the l1 grid solver on `f` restricted to `G^d_b`.
pub fn solve_grid_l1<O: Oracle>(
    f: &O,
    d: usize,
    b: u32,
    epsilon: f64,
    lambda: f64,
    params: &GridSolveParams,
) -> Result<GridReport, GridSolveError> {
    if !(epsilon > 0.0) || !(0.0..1.0).contains(&lambda) {
        return Err(GridSolveError::InvalidParams("need epsilon > 0 and lambda in [0, 1)".into()));
    }
    let required = min_grid_resolution(d, epsilon, lambda);
    if params.enforce_resolution && b < required {
        return Err(GridSolveError::ResolutionTooCoarse { bits: b, required });
    }
    let grid = Grid::new(d, b)?;
    let size = grid.enumerable_size()?;
    if f.dim() != d {
        return Err(OracleError::DimensionMismatch { expected: d, found: f.dim() }.into());
    }
    let exec = params.exec;
    let budget = params.budget(size);
    let sample = DirectionSample::new(d, params.dirs, params.seed ^ 0x5eed_d1e5)?;
    let mut alive: Vec<u32> = (0..size as u32).collect();
    let mut queried: HashSet<u64> = HashSet::new();
    let mut oracle = CountingOracle::new(f);
    let mut trace = Vec::new();
    let mut z = vec![0.0; d];

    while !alive.is_empty() && oracle.count() < budget {
        let iter = trace.len();
        let chosen: Vec<u32> = if alive.len() <= params.search_sample {
            alive.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (iter as u64).wrapping_mul(0x9e37_79b9));
            let mut pick = index::sample(&mut rng, alive.len(), params.search_sample).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|j| alive[j]).collect()
        };
        let mut coords = Vec::with_capacity(chosen.len() * d);
        for &i in &chosen {
            grid.coords_into(i as u64, &mut z);
            coords.extend_from_slice(&z);
        }
        let points = PointSet::from_flat(d, coords)?;
        let finder = FinderConfig { seed: params.seed.wrapping_add(iter as u64), ..params.finder.clone() };
        let cert = match find_centerpoint(&points, PNorm::One, &sample, params.rho_min, &finder, exec) {
            Ok(c) => c,
            Err(CenterpointError::NoCandidateReached { best, .. }) => *best,
            Err(e) => return Err(e.into()),
        };
        let rounded = round_centerpoint_to_grid_l1(&cert.candidate, b)?;
        let mut index = grid.index_of(&rounded)?;
        let rounding_fallback = queried.contains(&index);
        if rounding_fallback {
            index = l1_nearest(&grid, &alive, &cert.candidate) as u64;
        }
        queried.insert(index);
        let x = grid.point(index);
        let xc = x.to_coords();
        let fx = oracle.query(&xc)?;
        if fx.len() != d || !in_unit_cube(&fx) {
            return Err(GridSolveError::MalformedOracle { query: x.numerators().to_vec(), response: fx });
        }
        let residual = PNorm::One.dist(&fx, &xc);
        let alive_before = alive.len();
        if residual <= epsilon {
            trace.push(GridIterationRecord {
                iter,
                query: x.numerators().to_vec(),
                residual,
                alive_before,
                alive_after: alive_before,
                achieved_rho: cert.quality,
                rounding_fallback,
            });
            return Ok(GridReport {
                outcome: GridOutcome::FoundFixpoint { x, residual },
                trace,
                queries_used: oracle.count(),
                grid,
            });
        }
        let keep = exec.map(alive.len(), |j| {
            let mut z = vec![0.0; d];
            grid.coords_into(alive[j] as u64, &mut z);
            !bisector_contains(&xc, &fx, &z, PNorm::One)
        });
        let mut flags = keep.into_iter();
        alive.retain(|_| flags.next().expect("one flag per point"));
        trace.push(GridIterationRecord {
            iter,
            query: x.numerators().to_vec(),
            residual,
            alive_before,
            alive_after: alive.len(),
            achieved_rho: cert.quality,
            rounding_fallback,
        });
    }

    if !alive.is_empty() {
        return Err(GridSolveError::CertificateIncomplete { queries: oracle.count(), alive: alive.len(), trace });
    }
    let certificate = ViolationCertificate(
        oracle
            .log()
            .iter()
            .map(|r| CertificateEntry {
                x: grid.locate(&r.query).expect("queries are grid points").numerators().to_vec(),
                b,
                fx: r.response.clone(),
            })
            .collect(),
    );
    if !verify_violation_certificate(&certificate, d, b, exec)? {
        return Err(GridSolveError::CertificateInvalid);
    }
    Ok(GridReport {
        outcome: GridOutcome::Certificate { certificate },
        trace,
        queries_used: oracle.count(),
        grid,
    })
}
