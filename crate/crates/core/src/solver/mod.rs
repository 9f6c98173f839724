//! The continuous centerpoint-cutting solver and the Banach fallback.
//!
//! Each iteration certifies an approximate centerpoint `c` of the alive
//! cloud, queries `f(c)`, and either stops (residual at most `epsilon`) or
//! discards the bisector halfspace `H^p_{c, f(c)}`, which never contains the
//! ball of radius [`survival_radius`] around the fixpoint.

mod search_space;

pub use search_space::{discard_halfspace, Cut, Discard, SearchSpace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centerpoint::{
    default_rho_min, find_centerpoint, CenterpointError, DirectionSample, FinderConfig, Screening,
};
use crate::exec::Exec;
use crate::geometry::{in_unit_cube, PNorm, Point};
use crate::oracles::{CountingOracle, Oracle, OracleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("oracle returned {response:?} for query {query:?}, outside [0,1]^d")]
    MalformedOracle { query: Vec<f64>, response: Vec<f64> },
    #[error("search space emptied after {queries_used} queries; the map is probably not a contraction (or the cloud is too coarse)")]
    EmptySearchSpace { queries_used: usize },
    #[error("no {epsilon}-fixpoint after {queries} Banach steps (cap {cap}); the map is probably not a contraction")]
    NonContractionSuspected { queries: usize, cap: u64, epsilon: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Centerpoint(#[from] CenterpointError),
}

/// `eps (1 - lambda) / (2 + 2 lambda)`.
pub fn survival_radius(epsilon: f64, lambda: f64) -> f64 {
    epsilon * (1.0 - lambda) / (2.0 + 2.0 * lambda)
}

/// `ceil(log(1 / vol) / log(1 / (1 - rho)))` with `vol = (2^d / d!) r^d` the
/// lower bound on the volume of an lp ball of radius
/// `r = survival_radius(epsilon, lambda)`, clamped at 0.
///
/// Panics unless `0 < rho < 1`.
pub fn theoretical_query_bound(d: usize, epsilon: f64, lambda: f64, rho: f64) -> u64 {
    assert!(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1), got {rho}");
    let r = survival_radius(epsilon, lambda);
    let ln_fact: f64 = (1..=d).map(|k| (k as f64).ln()).sum();
    let direct = (2.0 * r).powi(d as i32) / (1..=d).map(|k| k as f64).product::<f64>();
    let ln_inv_vol = if direct.is_normal() {
        -direct.ln()
    } else {
        ln_fact - d as f64 * (2.0 * r).ln()
    };
    let k = ln_inv_vol / -(1.0 - rho).ln();
    k.ceil().max(0.0) as u64
}

/// Query cap of [`banach_iterate`]: `ceil(log(d/eps) / log(1/lambda)) + 1`,
/// and 2 for `lambda = 0`.
pub fn banach_cap(d: usize, epsilon: f64, lambda: f64) -> u64 {
    if lambda == 0.0 {
        return 2;
    }
    let k = ((d as f64 / epsilon).ln() / (1.0 / lambda).ln()).ceil().max(0.0);
    k as u64 + 1
}

/// `||f(x) - x||_p`, using exactly one query.
pub fn residual<O: Oracle>(f: &O, x: &[f64], p: PNorm) -> Result<f64, SolveError> {
    let fx = checked_eval(f, x)?;
    Ok(p.dist(&fx, x))
}

fn checked_eval<O: Oracle>(f: &O, x: &[f64]) -> Result<Vec<f64>, SolveError> {
    let fx = f.eval(x)?;
    if fx.len() != x.len() || !in_unit_cube(&fx) {
        return Err(SolveError::MalformedOracle { query: x.to_vec(), response: fx });
    }
    Ok(fx)
}

fn counted_eval<O: Oracle>(f: &mut CountingOracle<O>, x: &[f64]) -> Result<Vec<f64>, SolveError> {
    let fx = f.query(x)?;
    if fx.len() != x.len() || !in_unit_cube(&fx) {
        return Err(SolveError::MalformedOracle { query: x.to_vec(), response: fx });
    }
    Ok(fx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanachRun {
    /// The first iterate with residual at most `epsilon`.
    pub point: Point,
    pub queries: usize,
    /// Residual of every iterate, in order.
    pub residuals: Vec<f64>,
}

/// `x <- f(x)` from `x0` until the residual is at most `epsilon`.
pub fn banach_iterate<O: Oracle>(
    f: &O,
    x0: &[f64],
    epsilon: f64,
    lambda: f64,
    p: PNorm,
) -> Result<BanachRun, SolveError> {
    if !in_unit_cube(x0) {
        return Err(SolveError::InvalidParams("Banach start outside the unit cube".into()));
    }
    let cap = banach_cap(x0.len(), epsilon, lambda);
    let mut x = x0.to_vec();
    let mut residuals = Vec::new();
    while (residuals.len() as u64) < cap {
        let fx = checked_eval(f, &x)?;
        let r = p.dist(&fx, &x);
        residuals.push(r);
        if r <= epsilon {
            return Ok(BanachRun {
                point: Point::new(x).expect("finite"),
                queries: residuals.len(),
                residuals,
            });
        }
        x = fx;
    }
    Err(SolveError::NonContractionSuspected { queries: residuals.len(), cap, epsilon })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub d: usize,
    pub p: PNorm,
    pub epsilon: f64,
    pub lambda: f64,
    /// Cloud size `N`.
    pub cloud: usize,
    /// Direction-sample size.
    pub dirs: usize,
    pub rho_min: f64,
    /// `None` means 4 times the bound at `rho_min`, plus one.
    pub max_queries: Option<usize>,
    pub seed: u64,
    /// Alive points the centerpoint search runs on.
    pub search_sample: usize,
    /// Refill the cloud to `cloud` points once fewer than `cloud / refill_divisor` are alive.
    pub refill_divisor: usize,
    pub finder: FinderConfig,
    pub exec: Exec,
}

impl SolveParams {
    pub fn new(d: usize, p: PNorm, epsilon: f64, lambda: f64) -> Self {
        let dirs = DirectionSample::default_count(d);
        SolveParams {
            d,
            p,
            epsilon,
            lambda,
            cloud: 1 << 17,
            dirs,
            rho_min: default_rho_min(d),
            max_queries: None,
            seed: 0,
            search_sample: 1024,
            refill_divisor: 8,
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

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidParams(m.into()));
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= self.d as f64) {
            return bad("epsilon must lie in (0, d]");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1)");
        }
        if self.cloud == 0 || self.search_sample == 0 || self.refill_divisor == 0 {
            return bad("cloud, search_sample and refill_divisor must be positive");
        }
        if self.dirs < 2 * self.d {
            return bad("dirs must be at least 2d");
        }
        if !(self.rho_min > 0.0 && self.rho_min <= 1.0 / (self.d as f64 + 1.0)) {
            return bad("rho_min must lie in (0, 1/(d+1)]");
        }
        Ok(())
    }

    pub fn query_budget(&self) -> usize {
        self.max_queries
            .unwrap_or_else(|| 4 * theoretical_query_bound(self.d, self.epsilon, self.lambda, self.rho_min) as usize + 1)
    }

    /// Whether [`solve_continuous`] runs Banach iteration instead of cutting.
    pub fn uses_banach(&self) -> bool {
        (1.0 / self.epsilon).max(1.0 / (1.0 - self.lambda)) < self.d as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub query: Vec<f64>,
    pub residual: f64,
    pub alive_fraction_before: f64,
    pub alive_fraction_after: f64,
    pub alive_count: usize,
    pub achieved_rho: f64,
    pub discard_fraction: f64,
    pub cum_queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    FoundFixpoint { x: Point, residual: f64 },
    QueryBudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cutting,
    Banach,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outcome: Outcome,
    pub method: Method,
    pub trace: Vec<IterationRecord>,
    pub queries_used: usize,
    pub banach_queries: usize,
    /// Minimum achieved centerpoint quality over the trace.
    pub min_rho: Option<f64>,
    /// Query bound at `min_rho` for cutting runs, the Banach cap otherwise.
    pub theoretical_bound: u64,
}

impl SolveReport {
    pub fn is_fixpoint(&self) -> bool {
        matches!(self.outcome, Outcome::FoundFixpoint { .. })
    }

    pub fn final_residual(&self) -> Option<f64> {
        match self.outcome {
            Outcome::FoundFixpoint { residual, .. } => Some(residual),
            Outcome::QueryBudgetExhausted => None,
        }
    }
}

/// Runs [`solve_continuous_observed`] without an observer.
pub fn solve_continuous<O: Oracle>(f: &O, params: &SolveParams) -> Result<SolveReport, SolveError> {
    solve_continuous_observed(f, params, |_, _| {})
}

/// Solves for an `epsilon`-approximate fixpoint. `observe` is called after
/// every iteration with its record and the row-major coordinates of the
/// cloud points it killed.
pub fn solve_continuous_observed<O, F>(f: &O, params: &SolveParams, mut observe: F) -> Result<SolveReport, SolveError>
where
    O: Oracle,
    F: FnMut(&IterationRecord, &[f64]),
{
    params.validate()?;
    let d = params.d;
    if f.dim() != d {
        return Err(OracleError::DimensionMismatch { expected: d, found: f.dim() }.into());
    }

    if params.uses_banach() {
        let run = banach_iterate(f, &vec![0.5; d], params.epsilon, params.lambda, params.p)?;
        let residual = *run.residuals.last().expect("at least one query");
        return Ok(SolveReport {
            outcome: Outcome::FoundFixpoint { x: run.point, residual },
            method: Method::Banach,
            trace: Vec::new(),
            queries_used: run.queries,
            banach_queries: run.queries,
            min_rho: None,
            theoretical_bound: banach_cap(d, params.epsilon, params.lambda),
        });
    }

    let exec = params.exec;
    let budget = params.query_budget();
    let sample = DirectionSample::new(d, params.dirs, params.seed ^ 0x5eed_d1e5)?;
    let mut space = SearchSpace::uniform(d, params.cloud, params.seed);
    let refill_below = (params.cloud / params.refill_divisor).max(1);
    let min_jitter = survival_radius(params.epsilon, params.lambda) / d as f64;
    let mut oracle = CountingOracle::new(f);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut fraction = 1.0;

    let report = |trace: Vec<IterationRecord>, outcome, queries_used| {
        let min_rho = trace.iter().map(|r: &IterationRecord| r.achieved_rho).reduce(f64::min);
        let theoretical_bound = min_rho
            .filter(|&r| r > 0.0 && r < 1.0)
            .map_or(u64::MAX, |r| theoretical_query_bound(d, params.epsilon, params.lambda, r));
        SolveReport {
            outcome,
            method: Method::Cutting,
            trace,
            queries_used,
            banach_queries: 0,
            min_rho,
            theoretical_bound,
        }
    };

    while oracle.count() < budget {
        let iter = trace.len();
        if space.alive_count() < refill_below {
            space.refill(params.cloud, min_jitter, exec);
        }
        let alive = space
            .sample_alive(params.search_sample, params.seed ^ (iter as u64).wrapping_mul(0x9e37_79b9))
            .ok_or(SolveError::EmptySearchSpace { queries_used: oracle.count() })?;
        let finder = FinderConfig { seed: params.seed.wrapping_add(iter as u64), ..params.finder.clone() };
        let cert = match find_centerpoint(&alive, params.p, &sample, params.rho_min, &finder, exec) {
            Ok(c) => c,
            Err(CenterpointError::NoCandidateReached { best, .. }) => *best,
            Err(e) => return Err(e.into()),
        };
        let c = cert.candidate.as_slice();
        let fc = counted_eval(&mut oracle, c)?;
        let res = params.p.dist(&fc, c);
        let alive_count = space.alive_count();
        if res <= params.epsilon {
            let record = IterationRecord {
                iter,
                query: c.to_vec(),
                residual: res,
                alive_fraction_before: fraction,
                alive_fraction_after: fraction,
                alive_count,
                achieved_rho: cert.quality,
                discard_fraction: 0.0,
                cum_queries: oracle.count(),
            };
            observe(&record, &[]);
            trace.push(record);
            let x = cert.candidate.clone();
            return Ok(report(trace, Outcome::FoundFixpoint { x, residual: res }, oracle.count()));
        }
        let discard = space.discard(c, &fc, params.p, exec);
        let discard_fraction = discard.fraction(d);
        let after = fraction * (1.0 - discard_fraction);
        let record = IterationRecord {
            iter,
            query: c.to_vec(),
            residual: res,
            alive_fraction_before: fraction,
            alive_fraction_after: after,
            alive_count,
            achieved_rho: cert.quality,
            discard_fraction,
            cum_queries: oracle.count(),
        };
        observe(&record, &discard.killed);
        trace.push(record);
        fraction = after;
    }
    let used = oracle.count();
    Ok(report(trace, Outcome::QueryBudgetExhausted, used))
}
