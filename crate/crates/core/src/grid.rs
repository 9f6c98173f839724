//! The dyadic grid `G^d_b = {k / 2^b : k = 0..=2^b}^d`.
//!
//! Grid points are stored as integer numerators plus the scale `b`; they only
//! become floats at the point of use, where `k / 2^b` is exact for `b <= 52`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest grid that may be enumerated explicitly.
pub const GRID_ENUMERATION_CAP: u64 = 1 << 24;

/// Largest supported `b`; keeps every `k / 2^b` exactly representable.
pub const MAX_GRID_BITS: u32 = 52;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid needs b >= 1 and b <= {MAX_GRID_BITS}, got {0}")]
    InvalidBits(u32),
    #[error("grid dimension must be at least 1")]
    ZeroDimension,
    #[error("grid with (2^{bits}+1)^{dim} points exceeds the enumeration cap of 2^24")]
    CapExceeded { dim: usize, bits: u32 },
    #[error("coordinate {index} = {value} is not of the form k/2^{bits} in [0,1]")]
    OffGrid { index: usize, value: f64, bits: u32 },
    #[error("grid point has {found} coordinates, grid has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    bits: u32,
}

impl Grid {
    pub fn new(dim: usize, bits: u32) -> Result<Self, GridError> {
        if dim == 0 {
            return Err(GridError::ZeroDimension);
        }
        if bits == 0 || bits > MAX_GRID_BITS {
            return Err(GridError::InvalidBits(bits));
        }
        Ok(Grid { dim, bits })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Points per axis, `2^b + 1`.
    pub fn side(&self) -> u64 {
        (1u64 << self.bits) + 1
    }

    pub fn spacing(&self) -> f64 {
        (-(self.bits as f64)).exp2()
    }

    /// `(2^b + 1)^d`, or `None` on overflow.
    pub fn size(&self) -> Option<u64> {
        self.side().checked_pow(self.dim as u32)
    }

    /// Size of the grid, or `CapExceeded` if it may not be enumerated.
    pub fn enumerable_size(&self) -> Result<u64, GridError> {
        match self.size() {
            Some(n) if n <= GRID_ENUMERATION_CAP => Ok(n),
            _ => Err(GridError::CapExceeded { dim: self.dim, bits: self.bits }),
        }
    }

    /// Mixed-radix decoding, first coordinate fastest.
    pub fn point(&self, index: u64) -> GridPoint {
        let side = self.side();
        let mut rest = index;
        let k = (0..self.dim)
            .map(|_| {
                let k = rest % side;
                rest /= side;
                k
            })
            .collect();
        GridPoint { k, bits: self.bits }
    }

    /// Writes the real coordinates of grid point `index` into `out`.
    pub fn coords_into(&self, index: u64, out: &mut [f64]) {
        let side = self.side();
        let scale = self.spacing();
        let mut rest = index;
        for c in out.iter_mut() {
            *c = (rest % side) as f64 * scale;
            rest /= side;
        }
    }

    pub fn index_of(&self, g: &GridPoint) -> Result<u64, GridError> {
        self.check(g)?;
        let side = self.side();
        Ok(g.k.iter().rev().fold(0u64, |acc, &k| acc * side + k))
    }

    fn check(&self, g: &GridPoint) -> Result<(), GridError> {
        if g.k.len() != self.dim {
            return Err(GridError::DimensionMismatch { expected: self.dim, found: g.k.len() });
        }
        if g.bits != self.bits {
            return Err(GridError::InvalidBits(g.bits));
        }
        Ok(())
    }

    /// Exact `k / 2^b` test for every coordinate.
    pub fn locate(&self, x: &[f64]) -> Result<GridPoint, GridError> {
        if x.len() != self.dim {
            return Err(GridError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let scale = (self.bits as f64).exp2();
        let k = x
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                let t = value * scale;
                if t.fract() == 0.0 && (0.0..=scale).contains(&t) {
                    Ok(t as u64)
                } else {
                    Err(GridError::OffGrid { index, value, bits: self.bits })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GridPoint { k, bits: self.bits })
    }
}

/// A point of `G^d_b` stored as numerators `k_i` of `k_i / 2^b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    k: Vec<u64>,
    bits: u32,
}

impl GridPoint {
    pub fn new(k: Vec<u64>, bits: u32) -> Result<Self, GridError> {
        if bits == 0 || bits > MAX_GRID_BITS {
            return Err(GridError::InvalidBits(bits));
        }
        if k.is_empty() {
            return Err(GridError::ZeroDimension);
        }
        let top = 1u64 << bits;
        if let Some((index, &kk)) = k.iter().enumerate().find(|(_, &kk)| kk > top) {
            return Err(GridError::OffGrid {
                index,
                value: kk as f64 / top as f64,
                bits,
            });
        }
        Ok(GridPoint { k, bits })
    }

    pub fn numerators(&self) -> &[u64] {
        &self.k
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn to_coords(&self) -> Vec<f64> {
        let scale = (-(self.bits as f64)).exp2();
        self.k.iter().map(|&k| k as f64 * scale).collect()
    }
}

/// Smallest `b` for which the l1 grid solver is guaranteed to find an
/// `eps`-approximate fixpoint: `ceil(log2((2d/eps) (1+lambda)/(1-lambda)))`,
/// and at least 1.
pub fn min_grid_resolution(d: usize, epsilon: f64, lambda: f64) -> u32 {
    let t = (2.0 * d as f64 / epsilon) * (1.0 + lambda) / (1.0 - lambda);
    (t.log2().ceil().max(1.0)) as u32
}

/// Smallest `b` for which a grid `eps`-approximate fixpoint exists at all:
/// `ceil(log2((d + d lambda)/(2 eps)))`, clamped to at least 1.
pub fn existence_resolution(d: usize, epsilon: f64, lambda: f64) -> u32 {
    let t = (d as f64 + d as f64 * lambda) / (2.0 * epsilon);
    (t.log2().ceil().max(1.0)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_examples() {
        assert_eq!(min_grid_resolution(2, 0.01, 0.5), 11);
        assert_eq!(min_grid_resolution(1, 1.0, 0.0), 1);
        assert_eq!(min_grid_resolution(4, 1e-3, 0.9), 18);
        assert_eq!(existence_resolution(2, 0.01, 0.5), 8);
        assert_eq!(existence_resolution(1, 0.5, 0.0), 1);
    }

    #[test]
    fn existence_never_exceeds_solver_resolution() {
        for d in 1..8 {
            for &eps in &[1.0, 0.3, 1e-2, 1e-4] {
                for &lambda in &[0.0, 0.25, 0.5, 0.9, 0.99] {
                    assert!(existence_resolution(d, eps, lambda) <= min_grid_resolution(d, eps, lambda));
                }
            }
        }
    }

    #[test]
    fn index_roundtrip_and_coords() {
        let g = Grid::new(3, 2).unwrap();
        assert_eq!(g.size(), Some(125));
        let mut buf = [0.0; 3];
        for i in 0..125 {
            let p = g.point(i);
            assert_eq!(g.index_of(&p).unwrap(), i);
            g.coords_into(i, &mut buf);
            assert_eq!(buf.to_vec(), p.to_coords());
            assert_eq!(g.locate(&buf).unwrap(), p);
        }
    }

    #[test]
    fn locate_rejects_non_dyadic() {
        let g = Grid::new(1, 4).unwrap();
        assert!(matches!(g.locate(&[1.0 / 3.0]), Err(GridError::OffGrid { index: 0, .. })));
        assert!(matches!(g.locate(&[1.5]), Err(GridError::OffGrid { .. })));
        assert_eq!(g.locate(&[0.3125]).unwrap().numerators(), &[5]);
    }

    #[test]
    fn cap() {
        assert!(Grid::new(2, 11).unwrap().enumerable_size().is_ok());
        assert!(Grid::new(2, 12).unwrap().enumerable_size().is_err());
        assert!(Grid::new(8, 52).unwrap().size().is_none());
        assert_eq!(Grid::new(1, 0), Err(GridError::InvalidBits(0)));
    }
}
