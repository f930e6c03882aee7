//! Free-space subsets: hats, shadow regions, exit sets, blocking sets and the
//! truncated and practical shadows used by the sensor-based controller.

use crate::error::{NavError, Result};
use crate::geometry::{angle, cone_contains, Cone, Point, Sense, Vector, ANGLE_TOL, LENGTH_TOL};
use crate::world::{Obstacle, World};

/// Half-aperture `asin(r / ‖c − x‖)` of the cone with vertex `x` enclosing the
/// ball `B(c, r)`. Points on the sphere get `π/2`.
pub fn enclosing_angle(x: &Point, center: &Point, radius: f64) -> Result<f64> {
    let d = x.distance(center);
    if d < radius * (1.0 - LENGTH_TOL) {
        return Err(NavError::InvalidParameter(format!(
            "vertex lies inside the ball (distance {d} < radius {radius})"
        )));
    }
    Ok((radius / d).min(1.0).asin())
}

fn enclosing_cone(x: &Point, center: &Point, radius: f64) -> Result<Cone> {
    let theta = enclosing_angle(x, center, radius)?;
    Cone::new(x.clone(), center - x, theta)
}

/// Hat of the cone with vertex `x` enclosing `B(c, r)`: cone points inside the
/// ball whose diameter is `[x, c]`. Contains both `x` and `c`.
pub fn hat_contains(q: &Point, x: &Point, center: &Point, radius: f64) -> Result<bool> {
    let cone = enclosing_cone(x, center, radius)?;
    let scale = x.distance(center);
    Ok(cone_contains(q, &cone, Sense::Le) && (center - q).dot(&(x - q)) <= LENGTH_TOL * scale * scale)
}

/// Interior of the hat (strict inequalities).
pub fn open_hat_contains(q: &Point, x: &Point, center: &Point, radius: f64) -> Result<bool> {
    let cone = enclosing_cone(x, center, radius)?;
    let scale = x.distance(center);
    Ok(cone_contains(q, &cone, Sense::Lt) && (center - q).dot(&(x - q)) < -LENGTH_TOL * scale * scale)
}

/// Euclidean distance from `p` to the closed hat (zero inside).
///
/// The hat is rotationally symmetric about the line through `x` and `c`, so
/// the computation runs in the half-plane spanned by that axis and `p`.
pub fn hat_distance(p: &Point, x: &Point, center: &Point, radius: f64) -> Result<f64> {
    let theta = enclosing_angle(x, center, radius)?;
    let axis_len = x.distance(center);
    let axis = (center - x).normalized().ok_or(NavError::ZeroVector)?;
    let rel = p - x;
    let a = axis.dot(&rel);
    let rho = rel.axpy(-a, &axis).norm();
    let (st, ct) = theta.sin_cos();
    let half = 0.5 * axis_len;
    let in_cone = a >= 0.0 && rho * ct <= a * st + 1e-15 * axis_len;
    let in_ball = (a - half).powi(2) + rho * rho <= half * half;
    if in_cone && in_ball {
        return Ok(0.0);
    }
    // boundary pieces in the (a, rho) half-plane: the generator segment from the
    // vertex to the tangency point, and the ball arc from there to the far pole
    let tangency = (axis_len * ct * ct, axis_len * ct * st);
    let seg = {
        let (tx, ty) = tangency;
        let len2 = tx * tx + ty * ty;
        let s = ((a * tx + rho * ty) / len2).clamp(0.0, 1.0);
        (a - s * tx).hypot(rho - s * ty)
    };
    let arc = {
        let phi = rho.atan2(a - half);
        if (0.0..=2.0 * theta).contains(&phi) {
            ((a - half).hypot(rho) - half).abs()
        } else {
            (a - tangency.0).hypot(rho - tangency.1).min((a - axis_len).hypot(rho))
        }
    };
    Ok(seg.min(arc))
}

/// Shadow region of the ball `B(c, r)` seen from `x_d`: points of the
/// enclosing cone on the far side of the ball with diameter `[x_d, c]`.
pub fn shadow_contains(q: &Point, x_d: &Point, center: &Point, radius: f64) -> Result<bool> {
    let cone = enclosing_cone(x_d, center, radius)?;
    let scale = x_d.distance(center);
    Ok(cone_contains(q, &cone, Sense::Le) && (center - q).dot(&(x_d - q)) >= -LENGTH_TOL * scale * scale)
}

/// Exit set: the conical boundary of the shadow region.
pub fn exit_set_contains(q: &Point, x_d: &Point, center: &Point, radius: f64) -> Result<bool> {
    let cone = enclosing_cone(x_d, center, radius)?;
    let scale = x_d.distance(center);
    Ok(cone_contains(q, &cone, Sense::Eq) && (center - q).dot(&(x_d - q)) >= -LENGTH_TOL * scale * scale)
}

/// Ids of the obstacles meeting the closed segment `[x, y]`, in id order.
pub fn blocking_obstacles(x: &Point, y: &Point, world: &World) -> Vec<usize> {
    world.obstacles.iter().enumerate().filter(|(_, o)| o.segment_intersects(x, y)).map(|(id, _)| id).collect()
}

/// True iff the segment from `x` to `x_d` meets no obstacle.
pub fn is_visible(x: &Point, x_d: &Point, world: &World) -> bool {
    world.obstacles.iter().all(|o| !o.segment_intersects(x, x_d))
}

fn obstacle(world: &World, id: usize) -> Result<&Obstacle> {
    world.obstacles.get(id).ok_or_else(|| NavError::InvalidParameter(format!("no obstacle with id {id}")))
}

/// Shadow of obstacle `id`: the cone formula for discs, and for other convex
/// shapes the set of points whose segment to `x_d` meets the obstacle.
pub fn obstacle_shadow_contains(q: &Point, x_d: &Point, world: &World, id: usize) -> Result<bool> {
    match obstacle(world, id)? {
        Obstacle::Disc { center, radius } => shadow_contains(q, x_d, center, *radius),
        o => {
            if o.signed_distance(x_d) <= 0.0 {
                return Err(NavError::InsideObstacle { id });
            }
            Ok(o.segment_intersects(x_d, q))
        }
    }
}

/// Angular footprint of an obstacle seen from `x_d`: `(axis, half_width)` for
/// discs in any dimension, `(heading, [lo, hi])` offsets for planar shapes.
enum Footprint {
    Cone { axis: Vector, half: f64 },
    Interval { heading: f64, lo: f64, hi: f64 },
}

fn footprint(x_d: &Point, o: &Obstacle, id: usize) -> Result<Footprint> {
    if o.signed_distance(x_d) <= 0.0 {
        return Err(NavError::InsideObstacle { id });
    }
    match o {
        Obstacle::Disc { center, radius } => {
            Ok(Footprint::Cone { axis: center - x_d, half: enclosing_angle(x_d, center, *radius)? })
        }
        _ => {
            let reference = o.reference_point() - x_d;
            let heading = reference.heading();
            let (mut lo, mut hi) = (0.0f64, 0.0f64);
            for p in o.boundary_samples(1440) {
                let a = crate::geometry::signed_angle2(&reference, &(&p - x_d));
                lo = lo.min(a);
                hi = hi.max(a);
            }
            Ok(Footprint::Interval { heading, lo, hi })
        }
    }
}

fn footprints_overlap(a: &Footprint, b: &Footprint) -> Result<bool> {
    match (a, b) {
        (Footprint::Cone { axis: a1, half: h1 }, Footprint::Cone { axis: a2, half: h2 }) => {
            Ok(angle(a1, a2)? < h1 + h2 - ANGLE_TOL)
        }
        _ => {
            let (ha, la, ua) = interval(a);
            let (hb, lb, ub) = interval(b);
            // offsets of b's interval expressed around a's heading
            let shift = crate::geometry::wrap_angle(hb - ha);
            Ok(lb + shift < ua - ANGLE_TOL && la < ub + shift - ANGLE_TOL)
        }
    }
}

fn interval(f: &Footprint) -> (f64, f64, f64) {
    match f {
        Footprint::Cone { axis, half } => (axis.heading(), -half, *half),
        Footprint::Interval { heading, lo, hi } => (*heading, *lo, *hi),
    }
}

/// Progeny of obstacle `id`: obstacles farther from `x_d` whose shadows overlap
/// its shadow. Equal distances are ordered by id.
pub fn progeny(x_d: &Point, world: &World, id: usize) -> Result<Vec<usize>> {
    let oi = obstacle(world, id)?;
    let fi = footprint(x_d, oi, id)?;
    let di = oi.signed_distance(x_d);
    let mut out = Vec::new();
    for (j, oj) in world.obstacles.iter().enumerate() {
        if j == id {
            continue;
        }
        let dj = oj.signed_distance(x_d);
        let farther = di < dj || (di == dj && id < j);
        if farther && footprints_overlap(&fi, &footprint(x_d, oj, j)?)? {
            out.push(j);
        }
    }
    Ok(out)
}

/// Shadow of `id` minus the shadows of its progeny.
pub fn truncated_shadow_contains(q: &Point, x_d: &Point, world: &World, id: usize) -> Result<bool> {
    if !obstacle_shadow_contains(q, x_d, world, id)? {
        return Ok(false);
    }
    for j in progeny(x_d, world, id)? {
        if obstacle_shadow_contains(q, x_d, world, j)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Truncated shadow restricted to points within sensing range `range` of the
/// obstacle.
pub fn practical_shadow_contains(q: &Point, x_d: &Point, world: &World, id: usize, range: f64) -> Result<bool> {
    if !(range > 0.0) {
        return Err(NavError::InvalidParameter(format!("sensing range {range} must be positive")));
    }
    let o = obstacle(world, id)?;
    if o.signed_distance(q) > range {
        return Ok(false);
    }
    truncated_shadow_contains(q, x_d, world, id)
}
