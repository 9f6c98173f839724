//! Contraction instances with verifiable factors, query counting, and grid
//! restriction.

use std::collections::HashMap;

pub use nalgebra::DMatrix;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{in_unit_cube, PNorm, Point};
use crate::grid::{Grid, GridError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("query has {found} coordinates, oracle expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("off-grid query: coordinate {index} = {value} is not a multiple of 2^-{bits}")]
    OffGridQuery { index: usize, value: f64, bits: u32 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("operator bound {0} is not below 1")]
    NotContracting(f64),
    #[error("instances of a composition disagree on {0}")]
    IncompatibleComposition(&'static str),
    #[error("composition of zero maps")]
    EmptyComposition,
    #[error("point must lie in [0,1]^d with finite coordinates")]
    OutsideCube,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A map `[0,1]^d -> R^d` queried point by point.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError>;
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        (**self).eval(x)
    }
}

impl<T: Oracle + ?Sized> Oracle for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        (**self).eval(x)
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), OracleError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(OracleError::DimensionMismatch { expected, found: x.len() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContractionMap {
    Constant(Vec<f64>),
    /// `clamp_[0,1](A x + t)`.
    AffineClamped { a: DMatrix<f64>, t: Vec<f64> },
    /// Applied left to right.
    Composite(Vec<ContractionMap>),
}

impl ContractionMap {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ContractionMap::Constant(c) => c.clone(),
            ContractionMap::AffineClamped { a, t } => (0..t.len())
                .map(|i| {
                    let s: f64 = a.row(i).iter().zip(x).map(|(aij, xj)| aij * xj).sum();
                    (s + t[i]).clamp(0.0, 1.0)
                })
                .collect(),
            ContractionMap::Composite(maps) => {
                maps.iter().fold(x.to_vec(), |y, m| m.apply(&y))
            }
        }
    }
}

/// A map together with a declared contraction factor in a fixed lp norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionInstance {
    map: ContractionMap,
    dim: usize,
    lambda: f64,
    p: PNorm,
    known_fixpoint: Option<Point>,
}

impl ContractionInstance {
    pub fn map(&self) -> &ContractionMap {
        &self.map
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> PNorm {
        self.p
    }

    pub fn known_fixpoint(&self) -> Option<&Point> {
        self.known_fixpoint.as_ref()
    }

    /// Evaluates the map without any query accounting.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.map.apply(x)
    }

    /// Same instance with a larger declared factor; useful to hand the
    /// solver a looser promise than the verified one.
    pub fn with_declared_lambda(mut self, lambda: f64) -> Result<Self, OracleError> {
        if !(lambda >= self.lambda && lambda < 1.0) {
            return Err(OracleError::NotContracting(lambda));
        }
        self.lambda = lambda;
        Ok(self)
    }
}

impl Oracle for ContractionInstance {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        check_dim(self.dim, x)?;
        Ok(self.map.apply(x))
    }
}

/// Upper bound on the induced lp operator norm of a square matrix: exact for
/// p = 1 (max column sum), p = inf (max row sum) and diagonal matrices,
/// otherwise the interpolation bound `||A||_1^(1/p) ||A||_inf^(1-1/p)`.
pub fn operator_contraction_bound(a: &DMatrix<f64>, p: PNorm) -> Result<f64, OracleError> {
    if a.nrows() != a.ncols() {
        return Err(OracleError::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
    if diagonal {
        return Ok((0..n).fold(0.0, |m, i| f64::max(m, a[(i, i)].abs())));
    }
    let col = (0..n).fold(0.0, |m, j| f64::max(m, a.column(j).iter().map(|x| x.abs()).sum()));
    let row = (0..n).fold(0.0, |m, i| f64::max(m, a.row(i).iter().map(|x| x.abs()).sum()));
    Ok(match p {
        PNorm::One => col,
        PNorm::Infinity => row,
        _ => {
            let q = 1.0 / p.exponent();
            col.powf(q) * row.powf(1.0 - q)
        }
    })
}

pub fn make_constant(c: Vec<f64>, p: PNorm) -> Result<ContractionInstance, OracleError> {
    if c.is_empty() || !in_unit_cube(&c) {
        return Err(OracleError::OutsideCube);
    }
    Ok(ContractionInstance {
        dim: c.len(),
        known_fixpoint: Some(Point::new(c.clone()).expect("checked finite")),
        map: ContractionMap::Constant(c),
        lambda: 0.0,
        p,
    })
}

/// `x -> clamp_[0,1](A x + t)` with `lambda` = [`operator_contraction_bound`].
pub fn make_affine_clamped(a: DMatrix<f64>, t: Vec<f64>, p: PNorm) -> Result<ContractionInstance, OracleError> {
    let lambda = operator_contraction_bound(&a, p)?;
    if t.len() != a.nrows() {
        return Err(OracleError::DimensionMismatch { expected: a.nrows(), found: t.len() });
    }
    if a.is_empty() || !(lambda < 1.0) || t.iter().chain(a.iter()).any(|x| !x.is_finite()) {
        return Err(OracleError::NotContracting(lambda));
    }
    let d = t.len();
    let map = ContractionMap::AffineClamped { a: a.clone(), t: t.clone() };
    let linear = (DMatrix::identity(d, d) - &a)
        .lu()
        .solve(&DVector::from_vec(t))
        .map(|x| x.as_slice().to_vec())
        .filter(|x| in_unit_cube(x) && p.dist(&map.apply(x), x) <= 1e-12);
    let known_fixpoint = linear.or_else(|| banach_fixpoint(&map, d, p));
    Ok(ContractionInstance {
        map,
        dim: d,
        lambda,
        p,
        known_fixpoint: known_fixpoint.map(|x| Point::new(x).expect("finite")),
    })
}

/// Composition applied left to right; the factor is the product of factors.
pub fn compose(parts: Vec<ContractionInstance>) -> Result<ContractionInstance, OracleError> {
    let first = parts.first().ok_or(OracleError::EmptyComposition)?;
    let (dim, p) = (first.dim, first.p);
    if parts.iter().any(|i| i.dim != dim) {
        return Err(OracleError::IncompatibleComposition("dimension"));
    }
    if parts.iter().any(|i| i.p != p) {
        return Err(OracleError::IncompatibleComposition("norm"));
    }
    let lambda = parts.iter().map(|i| i.lambda).product();
    let map = ContractionMap::Composite(parts.into_iter().map(|i| i.map).collect());
    let known_fixpoint = banach_fixpoint(&map, dim, p).map(|x| Point::new(x).expect("finite"));
    Ok(ContractionInstance { map, dim, lambda, p, known_fixpoint })
}

fn banach_fixpoint(map: &ContractionMap, d: usize, p: PNorm) -> Option<Vec<f64>> {
    let mut x = vec![0.5; d];
    for _ in 0..1_000_000 {
        let y = map.apply(&x);
        if p.dist(&x, &y) <= 1e-14 {
            return Some(y);
        }
        x = y;
    }
    None
}

/// A clamped affine contraction with factor `lambda` in `p` and fixpoint
/// drawn from `[0.1, 0.9]^d`, fully determined by `seed`.
pub fn random_affine_instance(d: usize, p: PNorm, lambda: f64, seed: u64) -> Result<ContractionInstance, OracleError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(OracleError::NotContracting(lambda));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let bound = operator_contraction_bound(&raw, p)?;
    let a = if bound > 0.0 { raw * (lambda / bound) } else { raw };
    let x_star: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
    let ax = &a * DVector::from_column_slice(&x_star);
    let t: Vec<f64> = x_star.iter().zip(ax.iter()).map(|(x, y)| x - y).collect();
    let mut inst = make_affine_clamped(a, t, p)?;
    if inst.lambda < lambda {
        inst.lambda = lambda;
    }
    Ok(inst)
}

/// Query log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: Vec<f64>,
    pub response: Vec<f64>,
}

/// Counts distinct queries; repeating a query returns the cached response
/// without counting it again.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    cache: HashMap<Vec<u64>, usize>,
    log: Vec<QueryRecord>,
}

impl<O: Oracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle { inner, cache: HashMap::new(), log: Vec::new() }
    }

    pub fn query(&mut self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        let key: Vec<u64> = x.iter().map(|&c| (c + 0.0).to_bits()).collect();
        if let Some(&i) = self.cache.get(&key) {
            return Ok(self.log[i].response.clone());
        }
        let response = self.inner.eval(x)?;
        self.cache.insert(key, self.log.len());
        self.log.push(QueryRecord { query: x.to_vec(), response: response.clone() });
        Ok(response)
    }

    pub fn count(&self) -> usize {
        self.log.len()
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }
}

/// An oracle that only answers queries on `G^d_b`.
#[derive(Clone, Debug)]
pub struct GridRestricted<O> {
    inner: O,
    grid: Grid,
}

pub fn restrict_to_grid<O: Oracle>(inner: O, bits: u32) -> Result<GridRestricted<O>, OracleError> {
    let grid = Grid::new(inner.dim(), bits)?;
    Ok(GridRestricted { inner, grid })
}

fn grid_check(grid: &Grid, x: &[f64]) -> Result<(), OracleError> {
    check_dim(grid.dim(), x)?;
    grid.locate(x).map(|_| ()).map_err(|e| match e {
        GridError::OffGrid { index, value, bits } => OracleError::OffGridQuery { index, value, bits },
        other => other.into(),
    })
}

impl<O> GridRestricted<O> {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Oracle> Oracle for GridRestricted<O> {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        grid_check(&self.grid, x)?;
        self.inner.eval(x)
    }
}

/// Grid map `f(x)_i = 1` if `x_i <= 1/2`, else `0`, declared with
/// `lambda = 1/2`. The corners `0` and `1` swap, so `||f(0) - f(1)|| = ||0 - 1||`
/// and no factor below 1 holds; no grid point has residual below 1/2.
#[derive(Clone, Debug)]
pub struct NonContraction {
    grid: Grid,
}

pub const NON_CONTRACTION_DECLARED_LAMBDA: f64 = 0.5;

pub fn make_non_contraction(d: usize, bits: u32) -> Result<NonContraction, OracleError> {
    Ok(NonContraction { grid: Grid::new(d, bits)? })
}

impl NonContraction {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn declared_lambda(&self) -> f64 {
        NON_CONTRACTION_DECLARED_LAMBDA
    }
}

impl Oracle for NonContraction {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        grid_check(&self.grid, x)?;
        Ok(x.iter().map(|&c| if c <= 0.5 { 1.0 } else { 0.0 }).collect())
    }
}
