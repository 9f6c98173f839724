//! Exact lp-norm, ball and halfspace primitives.

mod halfspace;
mod norm;

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use halfspace::{
    bisector_contains, default_eps_grid, limit_contains, limit_contains_bruteforce,
    subgradient_support, BisectorHalfspace, LimitHalfspace, Subdifferential, UNIT_TOLERANCE,
};
pub use norm::{angle, norm, PNorm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector where a non-zero vector is required")]
    ZeroVector,
    #[error("bisector halfspace needs two distinct points")]
    CoincidentPoints,
    #[error("direction is not a unit vector (euclidean norm {0})")]
    NotUnit(f64),
    #[error("invalid norm exponent {0}; expected p >= 1 or infinity")]
    InvalidExponent(f64),
    #[error("cannot parse norm exponent {0:?}")]
    UnparsableExponent(String),
    #[error("point must have at least one coordinate")]
    EmptyPoint,
    #[error("coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

/// A point of `R^d` with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::EmptyPoint);
        }
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, c)| !c.is_finite()) {
            return Err(GeometryError::NonFinite { index, value });
        }
        Ok(Point(coords))
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1);
        Point(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn in_unit_cube(&self) -> bool {
        in_unit_cube(&self.0)
    }
}

pub fn in_unit_cube(x: &[f64]) -> bool {
    x.iter().all(|c| (0.0..=1.0).contains(c))
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = GeometryError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}
