//! Bisector and limit lp-halfspaces.
//!
//! A bisector halfspace `H(x, y)` holds the points at least as close to `x` as
//! to `y`. A limit halfspace `H(x, v)` holds the points `z` for which moving
//! `x` a little in direction `-v` never brings it closer to `z`; membership is
//! decided exactly by the sign of the support function of the subdifferential
//! of `||.||_p` at `z - x` in direction `v`.

use super::{GeometryError, PNorm, Point};

/// Tolerance on `||v||_2 = 1` for limit-halfspace directions.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// `2^0, 2^-1, ..., 2^-40`.
pub fn default_eps_grid() -> Vec<f64> {
    (0..=40).map(|k| 2f64.powi(-k)).collect()
}

/// `||x - z||_p <= ||y - z||_p`; ties are inside.
#[inline]
pub fn bisector_contains(x: &[f64], y: &[f64], z: &[f64], p: PNorm) -> bool {
    p.dist(x, z) <= p.dist(y, z)
}

/// Closed-form `max { <u, v> : u in d||w||_p }` for `w != 0`.
pub fn subgradient_support(w: &[f64], v: &[f64], p: PNorm) -> Result<f64, GeometryError> {
    check_dims(w.len(), v.len())?;
    if w.iter().all(|&a| a == 0.0) {
        return Err(GeometryError::ZeroVector);
    }
    Ok(support_unchecked(w, v, p))
}

// Caller guarantees w != 0 and matching lengths. Must stay bit-identical to
// `Subdifferential::support`.
fn support_unchecked(w: &[f64], v: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::One => w
            .iter()
            .zip(v)
            .map(|(&wi, &vi)| if wi == 0.0 { vi.abs() } else { wi.signum() * vi })
            .sum(),
        PNorm::Infinity => {
            let m = PNorm::Infinity.norm(w);
            w.iter()
                .zip(v)
                .filter(|(wi, _)| wi.abs() == m)
                .map(|(wi, vi)| wi.signum() * vi)
                .fold(f64::NEG_INFINITY, f64::max)
        }
        PNorm::Two | PNorm::General(_) => {
            let nw = p.norm(w);
            w.iter()
                .zip(v)
                .map(|(&wi, &vi)| gradient_coord(wi, nw, p) * vi)
                .sum()
        }
    }
}

#[inline]
fn gradient_coord(wi: f64, nw: f64, p: PNorm) -> f64 {
    match p {
        PNorm::Two => wi / nw,
        PNorm::General(e) => (wi.abs() / nw).powf(e - 1.0) * wi.signum(),
        _ => unreachable!("gradient only exists for 1 < p < inf"),
    }
}

/// Membership of `z` in the limit halfspace through `x` with direction `v`.
/// `z == x` is always inside.
#[inline]
pub fn limit_contains(x: &[f64], v: &[f64], z: &[f64], p: PNorm) -> bool {
    let w: Vec<f64> = z.iter().zip(x).map(|(a, b)| a - b).collect();
    if w.iter().all(|&a| a == 0.0) {
        return true;
    }
    support_unchecked(&w, v, p) >= 0.0
}

/// Membership via the definition: the AND over `eps_grid` of
/// `z in H(x, x - eps v)`. Independent of the subgradient route.
pub fn limit_contains_bruteforce(
    x: &[f64],
    v: &[f64],
    z: &[f64],
    p: PNorm,
    eps_grid: &[f64],
) -> bool {
    let mut y = vec![0.0; x.len()];
    eps_grid.iter().all(|&eps| {
        for ((yi, xi), vi) in y.iter_mut().zip(x).zip(v) {
            *yi = xi - eps * vi;
        }
        bisector_contains(x, &y, z, p)
    })
}

/// Reusable representation of `d||w||_p` for evaluating the support function
/// against many directions at the same `w`.
#[derive(Clone, Debug, Default)]
pub struct Subdifferential {
    kind: Kind,
    coef: Vec<f64>,
    active: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
enum Kind {
    #[default]
    Origin,
    Gradient,
    Manhattan,
    Chebyshev,
}

impl Subdifferential {
    pub fn at(w: &[f64], p: PNorm) -> Self {
        let mut s = Subdifferential::default();
        s.reset(w, p);
        s
    }

    /// Recomputes in place. Returns false when `w == 0` (no subdifferential
    /// is stored, and `contains` reports true).
    pub fn reset(&mut self, w: &[f64], p: PNorm) -> bool {
        self.coef.clear();
        self.active.clear();
        if w.iter().all(|&a| a == 0.0) {
            self.kind = Kind::Origin;
            return false;
        }
        match p {
            PNorm::One => {
                self.kind = Kind::Manhattan;
                self.coef
                    .extend(w.iter().map(|&a| if a == 0.0 { 0.0 } else { a.signum() }));
            }
            PNorm::Infinity => {
                self.kind = Kind::Chebyshev;
                let m = PNorm::Infinity.norm(w);
                for (i, &a) in w.iter().enumerate() {
                    if a.abs() == m {
                        self.active.push(i);
                        self.coef.push(a.signum());
                    }
                }
            }
            PNorm::Two | PNorm::General(_) => {
                self.kind = Kind::Gradient;
                let nw = p.norm(w);
                self.coef.extend(w.iter().map(|&a| gradient_coord(a, nw, p)));
            }
        }
        true
    }

    pub fn is_origin(&self) -> bool {
        self.kind == Kind::Origin
    }

    /// Support function in direction `v`. Undefined at the origin.
    #[inline]
    pub fn support(&self, v: &[f64]) -> f64 {
        match self.kind {
            Kind::Origin => f64::NAN,
            Kind::Gradient => self.coef.iter().zip(v).map(|(u, vi)| u * vi).sum(),
            Kind::Manhattan => self
                .coef
                .iter()
                .zip(v)
                .map(|(&s, &vi)| if s == 0.0 { vi.abs() } else { s * vi })
                .sum(),
            Kind::Chebyshev => self
                .active
                .iter()
                .zip(&self.coef)
                .map(|(&i, s)| s * v[i])
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Limit-halfspace membership of the point this was computed for.
    #[inline]
    pub fn contains(&self, v: &[f64]) -> bool {
        self.is_origin() || self.support(v) >= 0.0
    }

    /// A subgradient attaining the support in direction `v`.
    pub fn maximizer(&self, v: &[f64]) -> Vec<f64> {
        let d = v.len();
        match self.kind {
            Kind::Origin => vec![0.0; d],
            Kind::Gradient => self.coef.clone(),
            Kind::Manhattan => self
                .coef
                .iter()
                .zip(v)
                .map(|(&s, &vi)| match (s == 0.0, vi == 0.0) {
                    (false, _) => s,
                    (true, true) => 0.0,
                    (true, false) => vi.signum(),
                })
                .collect(),
            Kind::Chebyshev => {
                let (i, s) = self
                    .active
                    .iter()
                    .zip(&self.coef)
                    .max_by(|a, b| (a.1 * v[*a.0]).total_cmp(&(b.1 * v[*b.0])))
                    .map(|(&i, &s)| (i, s))
                    .expect("non-empty active set");
                let mut u = vec![0.0; d];
                u[i] = s;
                u
            }
        }
    }
}

fn check_dims(expected: usize, found: usize) -> Result<(), GeometryError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}

/// `{ z : ||x - z||_p <= ||y - z||_p }` for distinct `x`, `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct BisectorHalfspace {
    x: Point,
    y: Point,
    p: PNorm,
}

impl BisectorHalfspace {
    pub fn new(x: Point, y: Point, p: PNorm) -> Result<Self, GeometryError> {
        check_dims(x.dim(), y.dim())?;
        if x == y {
            return Err(GeometryError::CoincidentPoints);
        }
        Ok(BisectorHalfspace { x, y, p })
    }

    pub fn x(&self) -> &Point {
        &self.x
    }

    pub fn y(&self) -> &Point {
        &self.y
    }

    pub fn norm(&self) -> PNorm {
        self.p
    }

    pub fn contains(&self, z: &[f64]) -> Result<bool, GeometryError> {
        check_dims(self.x.dim(), z.len())?;
        Ok(bisector_contains(&self.x, &self.y, z, self.p))
    }
}

/// The limit halfspace through `x` in unit direction `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitHalfspace {
    x: Point,
    v: Vec<f64>,
    p: PNorm,
}

impl LimitHalfspace {
    /// `v` must already be a Euclidean unit vector.
    pub fn new(x: Point, v: Vec<f64>, p: PNorm) -> Result<Self, GeometryError> {
        check_dims(x.dim(), v.len())?;
        let n = PNorm::Two.norm(&v);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(LimitHalfspace { x, v, p })
    }

    /// Normalises any non-zero `direction`.
    pub fn through(x: Point, direction: &[f64], p: PNorm) -> Result<Self, GeometryError> {
        check_dims(x.dim(), direction.len())?;
        let n = PNorm::Two.norm(direction);
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        let v = direction.iter().map(|a| a / n).collect();
        Ok(LimitHalfspace { x, v, p })
    }

    pub fn x(&self) -> &Point {
        &self.x
    }

    pub fn direction(&self) -> &[f64] {
        &self.v
    }

    pub fn norm(&self) -> PNorm {
        self.p
    }

    pub fn contains(&self, z: &[f64]) -> Result<bool, GeometryError> {
        check_dims(self.x.dim(), z.len())?;
        Ok(limit_contains(&self.x, &self.v, z, self.p))
    }

    pub fn contains_bruteforce(&self, z: &[f64], eps_grid: &[f64]) -> Result<bool, GeometryError> {
        check_dims(self.x.dim(), z.len())?;
        Ok(limit_contains_bruteforce(&self.x, &self.v, z, self.p, eps_grid))
    }

    /// Support of `d||z - x||_p` in direction `v`; `None` at `z == x`.
    pub fn support_at(&self, z: &[f64]) -> Result<Option<f64>, GeometryError> {
        check_dims(self.x.dim(), z.len())?;
        let w: Vec<f64> = z.iter().zip(self.x.iter()).map(|(a, b)| a - b).collect();
        match subgradient_support(&w, &self.v, self.p) {
            Ok(s) => Ok(Some(s)),
            Err(GeometryError::ZeroVector) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn bisector_examples() {
        let h = BisectorHalfspace::new(pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), PNorm::Two).unwrap();
        assert!(h.contains(&[0.4, 0.3]).unwrap());
        let h1 = BisectorHalfspace::new(pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), PNorm::One).unwrap();
        assert!(!h1.contains(&[0.9, 0.0]).unwrap());
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(3.0)] {
            let h = BisectorHalfspace::new(pt(&[0.2, 0.6]), pt(&[0.8, 0.1]), p).unwrap();
            assert!(h.contains(&[0.5, 0.35]).unwrap(), "midpoint tie for {p}");
        }
    }

    #[test]
    fn bisector_rejects_bad_input() {
        assert_eq!(
            BisectorHalfspace::new(pt(&[0.5]), pt(&[0.5]), PNorm::One),
            Err(GeometryError::CoincidentPoints)
        );
        let h = BisectorHalfspace::new(pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), PNorm::One).unwrap();
        assert!(matches!(h.contains(&[0.1]), Err(GeometryError::DimensionMismatch { .. })));
    }

    #[test]
    fn support_examples() {
        assert!((subgradient_support(&[3.0, 4.0], &[1.0, 0.0], PNorm::Two).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(subgradient_support(&[1.0, 0.0], &[0.0, 1.0], PNorm::One).unwrap(), 1.0);
        assert_eq!(subgradient_support(&[1.0, -1.0], &[0.0, 1.0], PNorm::Infinity).unwrap(), 0.0);
        assert_eq!(
            subgradient_support(&[0.0, 0.0], &[0.0, 1.0], PNorm::One),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn general_gradient_is_unit_in_dual_norm() {
        let w = [0.3, -0.2, 0.7];
        let p = 3.0;
        let s = Subdifferential::at(&w, PNorm::General(p));
        let u = s.maximizer(&[1.0, 0.0, 0.0]);
        let q = p / (p - 1.0);
        let dual = PNorm::General(q).norm(&u);
        assert!((dual - 1.0).abs() < 1e-12);
        let nw = PNorm::General(p).norm(&w);
        let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((dot - nw).abs() < 1e-12);
    }

    #[test]
    fn limit_examples() {
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(1.7)] {
            let h = LimitHalfspace::new(pt(&[0.3, 0.3]), vec![0.6, -0.8], p).unwrap();
            assert!(h.contains(&[0.3, 0.3]).unwrap());
        }
        let h = LimitHalfspace::new(pt(&[0.2, 0.0]), vec![1.0, 0.0], PNorm::One).unwrap();
        assert!(h.contains(&[0.5, 0.7]).unwrap());
        assert!(!h.contains(&[0.1, 0.7]).unwrap());
        let h = LimitHalfspace::new(pt(&[0.0, 0.0]), vec![-FRAC_1_SQRT_2, FRAC_1_SQRT_2], PNorm::One).unwrap();
        assert!(h.contains(&[1.0, 0.0]).unwrap());
        assert!(h.contains_bruteforce(&[1.0, 0.0], &default_eps_grid()).unwrap());
    }

    #[test]
    fn bruteforce_examples() {
        let grid = default_eps_grid();
        let h = LimitHalfspace::new(pt(&[0.0, 0.0]), vec![1.0, 0.0], PNorm::Two).unwrap();
        assert!(!h.contains_bruteforce(&[-0.1, 5.0], &grid).unwrap());
        assert!(!h.contains(&[-0.1, 5.0]).unwrap());
        let h = LimitHalfspace::new(pt(&[0.0, 0.0]), vec![1.0, 0.0], PNorm::Infinity).unwrap();
        assert!(h.contains_bruteforce(&[0.3, 2.0], &grid).unwrap());
        assert!(h.contains(&[0.3, 2.0]).unwrap());
        let h = LimitHalfspace::new(pt(&[0.2, 0.0]), vec![1.0, 0.0], PNorm::One).unwrap();
        assert!(h.contains_bruteforce(&[0.5, 0.7], &grid).unwrap());
        assert!(h.contains_bruteforce(&[0.2, 0.0], &grid).unwrap());
    }

    #[test]
    fn direction_must_be_unit() {
        assert!(matches!(
            LimitHalfspace::new(pt(&[0.0, 0.0]), vec![1.0, 1.0], PNorm::Two),
            Err(GeometryError::NotUnit(_))
        ));
        let h = LimitHalfspace::through(pt(&[0.0, 0.0]), &[3.0, 4.0], PNorm::Two).unwrap();
        assert!((PNorm::Two.norm(h.direction()) - 1.0).abs() < UNIT_TOLERANCE);
        assert_eq!(
            LimitHalfspace::through(pt(&[0.0, 0.0]), &[0.0, 0.0], PNorm::Two),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn reusable_subdifferential_matches_single_shot() {
        let ws = [[0.3, -0.5, 0.0], [0.5, -0.5, 0.1], [-0.2, 0.9, 0.4]];
        let vs = [[0.6, 0.0, -0.8], [0.0, 1.0, 0.0], [-0.48, 0.6, 0.64]];
        let mut s = Subdifferential::default();
        for p in [PNorm::One, PNorm::Two, PNorm::Infinity, PNorm::General(2.5)] {
            for w in &ws {
                s.reset(w, p);
                for v in &vs {
                    let a = subgradient_support(w, v, p).unwrap();
                    assert_eq!(a.to_bits(), s.support(v).to_bits());
                    let u = s.maximizer(v);
                    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    assert!((dot - a).abs() < 1e-12, "maximizer attains support");
                }
            }
        }
    }
}
