use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Metric selector for `[0,1]^d`.
///
/// The dedicated variants are used whenever the exponent is exactly 1, 2 or
/// infinity; `General` is reserved for the remaining exponents in `(1, inf)`.
/// Code that needs the closed-form subdifferential of the 1- or inf-norm must
/// match on the variant, never compare exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PNorm {
    One,
    Two,
    Infinity,
    General(f64),
}

impl PNorm {
    /// Builds the norm for exponent `p`, picking the dedicated variant when
    /// `p` is exactly 1, 2 or infinite.
    pub fn new(p: f64) -> Result<Self, GeometryError> {
        if p == 1.0 {
            Ok(PNorm::One)
        } else if p == 2.0 {
            Ok(PNorm::Two)
        } else if p == f64::INFINITY {
            Ok(PNorm::Infinity)
        } else if p > 1.0 && p.is_finite() {
            Ok(PNorm::General(p))
        } else {
            Err(GeometryError::InvalidExponent(p))
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            PNorm::One => 1.0,
            PNorm::Two => 2.0,
            PNorm::Infinity => f64::INFINITY,
            PNorm::General(p) => p,
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, PNorm::Infinity)
    }

    /// `||w||_p`.
    ///
    /// Panics if the result is NaN, which only happens for NaN input.
    pub fn norm(&self, w: &[f64]) -> f64 {
        let r = match *self {
            PNorm::One => w.iter().map(|a| a.abs()).sum(),
            PNorm::Two => euclid(w.iter().copied()),
            PNorm::Infinity => w.iter().fold(0.0f64, |m, a| m.max(a.abs())),
            PNorm::General(p) => general_norm(w.iter().copied(), p),
        };
        assert!(!r.is_nan(), "norm of a vector containing NaN");
        r
    }

    /// `||a - b||_p`, bit-identical to `self.norm(&(a - b))`.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diff = a.iter().zip(b).map(|(x, y)| x - y);
        let r = match *self {
            PNorm::One => diff.map(f64::abs).sum(),
            PNorm::Two => euclid(diff),
            PNorm::Infinity => diff.fold(0.0f64, |m, t| m.max(t.abs())),
            PNorm::General(p) => {
                let m = a
                    .iter()
                    .zip(b)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                scaled_power_sum(diff, m, p)
            }
        };
        assert!(!r.is_nan(), "distance involving NaN coordinates");
        r
    }
}

// Plain sum of squares, rescaled only when it under- or overflows.
fn euclid(w: impl Iterator<Item = f64> + Clone) -> f64 {
    let s: f64 = w.clone().map(|t| t * t).sum();
    if s.is_finite() && s >= 1e-280 {
        s.sqrt()
    } else {
        general_norm(w, 2.0)
    }
}

fn general_norm(w: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    let m = w.clone().fold(0.0f64, |m, a| m.max(a.abs()));
    scaled_power_sum(w, m, p)
}

// m * (sum (|w_i|/m)^p)^(1/p); the max-normalisation keeps large p finite.
fn scaled_power_sum(w: impl Iterator<Item = f64>, m: f64, p: f64) -> f64 {
    if m == 0.0 || m.is_nan() {
        return m;
    }
    let s: f64 = w.map(|a| (a.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::One => f.write_str("1"),
            PNorm::Two => f.write_str("2"),
            PNorm::Infinity => f.write_str("inf"),
            PNorm::General(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for PNorm {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => return Ok(PNorm::Infinity),
            _ => {}
        }
        let p: f64 = t
            .parse()
            .map_err(|_| GeometryError::UnparsableExponent(s.to_string()))?;
        if p.is_infinite() {
            return Err(GeometryError::UnparsableExponent(s.to_string()));
        }
        PNorm::new(p)
    }
}

impl TryFrom<String> for PNorm {
    type Error = GeometryError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PNorm> for String {
    fn from(p: PNorm) -> String {
        p.to_string()
    }
}

/// `||w||_p` as a free function.
pub fn norm(w: &[f64], p: PNorm) -> f64 {
    p.norm(w)
}

/// Euclidean angle between two non-zero vectors, in `[0, pi]`.
pub fn angle(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = PNorm::Two.norm(a);
    let nb = PNorm::Two.norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&[3.0, 4.0], PNorm::Two), 5.0);
        assert_eq!(norm(&[1.0, -1.0], PNorm::One), 2.0);
        assert_eq!(norm(&[0.5, -0.7, 0.2], PNorm::Infinity), 0.7);
    }

    #[test]
    fn zero_only_for_zero_vector() {
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(3.5)] {
            assert_eq!(p.norm(&[0.0, 0.0, 0.0]), 0.0);
            assert!(p.norm(&[0.0, 1e-300, 0.0]) > 0.0);
        }
    }

    #[test]
    fn general_norm_matches_definition_and_survives_large_p() {
        let w = [0.3, -0.4, 0.5];
        let p = 3.0;
        let direct = w.iter().map(|a: &f64| a.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        assert!((PNorm::General(p).norm(&w) - direct).abs() < 1e-15);
        let big = PNorm::General(64.0).norm(&[1e10, 2e10]);
        assert!(big.is_finite() && (big - 2e10).abs() / 2e10 < 1e-12);
    }

    #[test]
    fn dist_is_bit_identical_to_norm_of_difference() {
        let a = [0.123, 0.987, 0.5];
        let b = [0.3333, 0.1, 0.77];
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(1.5)] {
            assert_eq!(p.dist(&a, &b).to_bits(), p.norm(&d).to_bits());
        }
    }

    #[test]
    #[should_panic]
    fn nan_is_a_contract_violation() {
        PNorm::Two.norm(&[f64::NAN, 1.0]);
    }

    #[test]
    fn dispatch_on_exact_exponents() {
        assert_eq!(PNorm::new(1.0).unwrap(), PNorm::One);
        assert_eq!(PNorm::new(2.0).unwrap(), PNorm::Two);
        assert_eq!(PNorm::new(f64::INFINITY).unwrap(), PNorm::Infinity);
        assert_eq!(PNorm::new(1.5).unwrap(), PNorm::General(1.5));
        assert!(PNorm::new(0.5).is_err());
        assert!(PNorm::new(f64::NAN).is_err());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("inf".parse::<PNorm>().unwrap(), PNorm::Infinity);
        assert_eq!("1".parse::<PNorm>().unwrap(), PNorm::One);
        assert_eq!("2.0".parse::<PNorm>().unwrap(), PNorm::Two);
        assert_eq!("1.5".parse::<PNorm>().unwrap(), PNorm::General(1.5));
        assert!("abc".parse::<PNorm>().is_err());
        assert!("0.9".parse::<PNorm>().is_err());
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(3.0)] {
            assert_eq!(p.to_string().parse::<PNorm>().unwrap(), p);
        }
    }

    #[test]
    fn angle_examples() {
        assert_eq!(angle(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((angle(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - PI).abs() < 1e-15);
        assert!(matches!(angle(&[0.0, 0.0], &[1.0, 0.0]), Err(GeometryError::ZeroVector)));
    }
}
