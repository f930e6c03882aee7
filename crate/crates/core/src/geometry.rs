//! Vector, cone and half-space primitives in `n` dimensions.
//!
//! Points and vectors share one type. Dimension is a runtime property; every
//! binary operation assumes both operands have the same length.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{NavError, Result};

/// Absolute angular tolerance (radians) used by all angular comparisons.
pub const ANGLE_TOL: f64 = 1e-9;
/// Relative length tolerance; multiply by the workspace radius.
pub const LENGTH_TOL: f64 = 1e-9;
/// Tolerance on the norm of vectors that must be unit.
pub const UNIT_TOL: f64 = 1e-12;

/// A point or a displacement in `R^n`.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(SmallVec<[f64; 3]>);

/// Points and vectors are the same type; the alias documents intent.
pub type Point = Vector;

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(SmallVec::from_vec(v))
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0.into_vec()
    }
}

impl From<[f64; 2]> for Vector {
    fn from(v: [f64; 2]) -> Self {
        Vector::new2(v[0], v[1])
    }
}

impl From<[f64; 3]> for Vector {
    fn from(v: [f64; 3]) -> Self {
        Vector(SmallVec::from_slice(&v))
    }
}

impl Vector {
    pub fn from_slice(s: &[f64]) -> Self {
        Vector(SmallVec::from_slice(s))
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Vector(SmallVec::from_slice(&[x, y]))
    }

    pub fn zeros(n: usize) -> Self {
        Vector(SmallVec::from_elem(0.0, n))
    }

    /// Unit vector along coordinate axis `axis`.
    pub fn basis(n: usize, axis: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[axis] = 1.0;
        v
    }

    /// Unit vector at polar angle `theta` (2D).
    pub fn polar(theta: f64) -> Self {
        Self::new2(theta.cos(), theta.sin())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `self + s * v`
    pub fn axpy(&self, s: f64, v: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), v.dim());
        Vector(self.0.iter().zip(v.0.iter()).map(|(a, b)| a + s * b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * s).collect())
    }

    /// Unit vector in the same direction, or `None` for (numerically) zero vectors.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self.scale(1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// 2D scalar cross product `self.x * other.y - self.y * other.x`.
    pub fn cross2(&self, other: &Vector) -> f64 {
        self.0[0] * other.0[1] - self.0[1] * other.0[0]
    }

    /// 2D counter-clockwise rotation by `angle`.
    pub fn rotate2(&self, angle: f64) -> Vector {
        let (s, c) = angle.sin_cos();
        Vector::new2(c * self.0[0] - s * self.0[1], s * self.0[0] + c * self.0[1])
    }

    /// 2D perpendicular (counter-clockwise quarter turn).
    pub fn perp(&self) -> Vector {
        Vector::new2(-self.0[1], self.0[0])
    }

    /// Polar angle of a 2D vector, `atan2(y, x)`.
    pub fn heading(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Vector> for &Vector {
            type Output = Vector;
            fn $method(self, rhs: &Vector) -> Vector {
                debug_assert_eq!(self.dim(), rhs.dim());
                Vector(self.0.iter().zip(rhs.0.iter()).map(|(a, b)| a $op b).collect())
            }
        }
        impl $trait<Vector> for Vector {
            type Output = Vector;
            fn $method(self, rhs: Vector) -> Vector {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Vector> for Vector {
            type Output = Vector;
            fn $method(self, rhs: &Vector) -> Vector {
                (&self).$method(rhs)
            }
        }
        impl $trait<Vector> for &Vector {
            type Output = Vector;
            fn $method(self, rhs: Vector) -> Vector {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);

impl AddAssign<&Vector> for Vector {
    fn add_assign(&mut self, rhs: &Vector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&Vector> for Vector {
    fn sub_assign(&mut self, rhs: &Vector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        self.scale(s)
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        self.scale(s)
    }
}

impl Mul<&Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: &Vector) -> Vector {
        v.scale(self)
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        v.scale(self)
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

/// Comparison sense used by cones and half-spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Sense {
    /// Evaluates `lhs Δ rhs` with absolute tolerance `tol`. Closed senses
    /// accept the boundary band, open senses reject it.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Sense::Eq => (lhs - rhs).abs() <= tol,
            Sense::Le => lhs <= rhs + tol,
            Sense::Lt => lhs < rhs - tol,
            Sense::Ge => lhs >= rhs - tol,
            Sense::Gt => lhs > rhs + tol,
        }
    }
}

/// Circular cone with vertex, axis and half-aperture in `(0, π/2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub vertex: Point,
    pub axis: Vector,
    pub half_aperture: f64,
}

impl Cone {
    pub fn new(vertex: Point, axis: Vector, half_aperture: f64) -> Result<Self> {
        if axis.norm() <= 0.0 {
            return Err(NavError::ZeroVector);
        }
        if !(half_aperture > 0.0 && half_aperture <= std::f64::consts::FRAC_PI_2 + ANGLE_TOL) {
            return Err(NavError::InvalidParameter(format!("cone half-aperture {half_aperture} outside (0, pi/2]")));
        }
        Ok(Cone { vertex, axis, half_aperture })
    }
}

/// Half-space `{q | normal · (q - anchor) Δ 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    pub anchor: Point,
    pub normal: Vector,
    pub sense: Sense,
}

impl HalfSpace {
    pub fn new(anchor: Point, normal: Vector, sense: Sense) -> Result<Self> {
        if normal.norm() <= 0.0 {
            return Err(NavError::ZeroVector);
        }
        Ok(HalfSpace { anchor, normal, sense })
    }

    pub fn contains(&self, q: &Point) -> bool {
        let n = self.normal.norm();
        let d = q - &self.anchor;
        self.sense.holds(self.normal.dot(&d) / n, 0.0, LENGTH_TOL * d.norm().max(1.0))
    }
}

fn check_unit(v: &Vector) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(NavError::NonUnitVector { norm: n });
    }
    Ok(())
}

/// Projection of `x` onto the line spanned by the unit vector `v`.
pub fn proj_parallel(v: &Vector, x: &Vector) -> Result<Vector> {
    check_unit(v)?;
    Ok(v.scale(v.dot(x)))
}

/// Projection of `x` onto the hyperplane orthogonal to the unit vector `v`.
pub fn proj_orthogonal(v: &Vector, x: &Vector) -> Result<Vector> {
    check_unit(v)?;
    Ok(x.axpy(-v.dot(x), v))
}

/// Angle in `[0, π]` between two non-zero vectors.
///
/// Evaluated as `atan2(|x⊥|, x·y)` on the normalized operands, which agrees
/// with the clamped `acos` form but keeps full precision near 0 and π.
pub fn angle(x: &Vector, y: &Vector) -> Result<f64> {
    let xn = x.normalized().ok_or(NavError::ZeroVector)?;
    let yn = y.normalized().ok_or(NavError::ZeroVector)?;
    Ok(unit_angle(&xn, &yn))
}

/// Angle between two unit vectors.
pub(crate) fn unit_angle(a: &Vector, b: &Vector) -> f64 {
    let c = a.dot(b).clamp(-1.0, 1.0);
    let s = a.axpy(-c, b).norm();
    // |a - c b| = sin of the angle for unit a, b
    s.atan2(c)
}

/// Cone membership `‖v‖‖q−x‖cos ψ Δ vᵀ(q−x)`.
///
/// The vertex itself satisfies every closed sense (`0 Δ 0`).
pub fn cone_contains(q: &Point, cone: &Cone, sense: Sense) -> bool {
    let d = q - &cone.vertex;
    let axis = match cone.axis.normalized() {
        Some(a) => a,
        None => return false,
    };
    let dn = d.norm();
    let lhs = dn * cone.half_aperture.cos();
    let rhs = axis.dot(&d);
    sense.holds(lhs, rhs, ANGLE_TOL * dn.max(1.0))
}

/// Distance from `p` to the segment `[a, b]`; a degenerate segment is a point.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    p.distance(&a.axpy(t, &ab))
}

/// True iff the closed disc (ball) touches the segment `[a, b]`. Tangency counts.
pub fn segment_disc_intersects(a: &Point, b: &Point, center: &Point, radius: f64) -> bool {
    point_segment_distance(center, a, b) <= radius
}

/// Both roots `t0 ≤ t1` of `|origin + t·dir − center| = radius` for unit `dir`.
pub fn ray_sphere_roots(origin: &Point, dir: &Vector, center: &Point, radius: f64) -> Option<(f64, f64)> {
    let oc = origin - center;
    let b = dir.dot(&oc);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some((-b - sq, -b + sq))
}

/// Ray parameter of the first contact with a solid ball: the entry point from
/// outside, `0` from the interior, `None` when the ray misses or leaves from
/// the boundary.
pub fn ray_ball_entry(origin: &Point, dir: &Vector, center: &Point, radius: f64) -> Option<f64> {
    let (t0, t1) = ray_sphere_roots(origin, dir, center, radius)?;
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 > 1e-12 * radius {
        Some(0.0)
    } else {
        None
    }
}

/// Ray parameter at which a ray started inside a ball leaves it.
pub fn ray_ball_exit(origin: &Point, dir: &Vector, center: &Point, radius: f64) -> Option<f64> {
    let (_, t1) = ray_sphere_roots(origin, dir, center, radius)?;
    (t1 >= 0.0).then_some(t1)
}

/// Surfaces a ray can be cast against.
#[derive(Clone, Debug)]
pub enum Surface<'a> {
    /// Boundary of a solid ball obstacle; a ray from the interior hits at `0`.
    Sphere { center: &'a Point, radius: f64 },
    /// Boundary of the origin-centred workspace ball.
    Workspace { radius: f64 },
}

/// First hit of the ray `origin + t·direction` with `surface`, as `(t, point)`.
pub fn ray_hit(origin: &Point, direction: &Vector, surface: &Surface<'_>) -> Result<Option<(f64, Point)>> {
    check_unit(direction)?;
    let t = match surface {
        Surface::Sphere { center, radius } => ray_ball_entry(origin, direction, center, *radius),
        Surface::Workspace { radius } => {
            let zero = Vector::zeros(origin.dim());
            ray_ball_exit(origin, direction, &zero, *radius)
        }
    };
    Ok(t.map(|t| (t, origin.axpy(t, direction))))
}

/// Intersection parameter `(t, s)` of segments `p + t·r` and `q + s·w` (2D),
/// both in `[0, 1]`, or `None` when they do not cross or are parallel.
pub fn segment_intersection2(p: &Point, p2: &Point, q: &Point, q2: &Point) -> Option<(f64, f64)> {
    let r = p2 - p;
    let w = q2 - q;
    let denom = r.cross2(&w);
    if denom.abs() < 1e-300 {
        return None;
    }
    let qp = q - p;
    let t = qp.cross2(&w) / denom;
    let s = qp.cross2(&r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s) {
        Some((t, s))
    } else {
        None
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Signed angle from `a` to `b` (2D), in `(−π, π]`.
pub fn signed_angle2(a: &Vector, b: &Vector) -> f64 {
    a.cross2(b).atan2(a.dot(b))
}
