//! Map-based controller for sphere worlds.
//!
//! Away from obstacles the robot follows `u_d = γ (x_d − x)`. When the segment
//! to the destination is blocked, `u_d` is projected onto the cone enclosing the
//! blocking obstacle nearest to `x_d`, and the projection is repeated on every
//! obstacle that blocks the resulting tangent segment.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geometry::{unit_angle, Point, Vector, ANGLE_TOL};
use crate::visibility::blocking_obstacles;
use crate::world::World;

/// Gains of the map-based law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Gain of the nominal law `γ (x_d − x)`.
    pub gamma: f64,
    /// Convergence radius around the destination.
    pub e_c: f64,
    /// Cap on the number of successive projections; `None` means the obstacle count.
    #[serde(default)]
    pub max_depth: Option<usize>,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams { gamma: 1.0, e_c: 1e-3, max_depth: None }
    }
}

impl ControlParams {
    pub fn validate(&self, obstacle_count: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(NavError::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.e_c > 0.0) {
            return Err(NavError::InvalidParameter(format!("e_c must be positive, got {}", self.e_c)));
        }
        if let Some(d) = self.max_depth {
            if d < obstacle_count.max(1) {
                return Err(NavError::InvalidParameter(format!(
                    "max_depth {d} is below the obstacle count {obstacle_count}"
                )));
            }
        }
        Ok(())
    }

    pub fn depth_limit(&self, obstacle_count: usize) -> usize {
        self.max_depth.unwrap_or(obstacle_count.max(1))
    }
}

/// One projection of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStep {
    pub obstacle: usize,
    /// Command after this projection.
    pub u: Vector,
    /// Tangency point of the line directed by `u` with the obstacle; absent when `u = 0`.
    pub tangency: Option<Point>,
    /// Angle between the incoming command and the obstacle axis.
    pub beta: f64,
    /// Half-aperture of the enclosing cone.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectionTrace {
    pub steps: Vec<ProjectionStep>,
    /// Set when a projection returned the zero vector and the chain stopped.
    pub degenerate: bool,
}

impl ProjectionTrace {
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn obstacle_sequence(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.obstacle).collect()
    }

    /// Intermediate destinations `x + u_p`.
    pub fn virtual_destinations(&self, x: &Point) -> Vec<Point> {
        self.steps.iter().map(|s| x + &s.u).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Visible,
    Projected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub u: Vector,
    pub mode: Mode,
    pub trace: ProjectionTrace,
}

pub fn nominal(x: &Point, x_d: &Point, gamma: f64) -> Vector {
    (x_d - x) * gamma
}

/// Cone projection on a ball. Returns `(ξ, β, θ)`.
///
/// `ξ = u − ‖u‖ sin(θ−β)/sin θ · (c−x)/‖c−x‖` is the vector of the cone surface
/// closest in angle to `u`, scaled by `sin β / sin θ`.
pub(crate) fn project_on_ball(
    u: &Vector,
    x: &Point,
    center: &Point,
    radius: f64,
    id: usize,
) -> Result<(Vector, f64, f64)> {
    let to_center = center - x;
    let d = to_center.norm();
    if d < radius * (1.0 - 1e-6) {
        return Err(NavError::InsideObstacle { id });
    }
    let un = u.norm();
    if un == 0.0 {
        return Err(NavError::ZeroVector);
    }
    // points a hair inside the sphere (integration drift) are treated as on it
    let theta = (radius / d).min(1.0).asin();
    let axis = to_center * (1.0 / d);
    let beta = unit_angle(&(u * (1.0 / un)), &axis);
    let beta = if beta > theta {
        if beta > theta + ANGLE_TOL {
            return Err(NavError::OutsideConeRegion { id, beta, theta });
        }
        theta
    } else {
        beta
    };
    if beta <= ANGLE_TOL * 1e-3 {
        return Ok((Vector::zeros(u.dim()), beta, theta));
    }
    let xi = u.axpy(-un * (theta - beta).sin() / theta.sin(), &axis);
    Ok((xi, beta, theta))
}

/// Projection inside the control laws. A command already outside the cone
/// (possible only on the exit set up to rounding, where the blocking test and
/// the cone test disagree) is left unchanged, which is the value of the law
/// on the exit set.
fn constrain(u: &Vector, x: &Point, center: &Point, radius: f64, id: usize) -> Result<(Vector, f64, f64)> {
    match project_on_ball(u, x, center, radius, id) {
        Err(NavError::OutsideConeRegion { theta, .. }) => Ok((u.clone(), theta, theta)),
        other => other,
    }
}

fn disc(world: &World, id: usize) -> Result<(&Point, f64)> {
    world
        .obstacles
        .get(id)
        .ok_or_else(|| NavError::InvalidParameter(format!("no obstacle with id {id}")))?
        .as_disc()
        .ok_or_else(|| NavError::Unsupported("the map-based controller needs disc obstacles".into()))
}

/// Projection of `u` onto the cone from `x` enclosing obstacle `id`.
pub fn xi(u: &Vector, x: &Point, world: &World, id: usize) -> Result<Vector> {
    let (c, r) = disc(world, id)?;
    project_on_ball(u, x, c, r, id).map(|p| p.0)
}

/// Tangency point of the line from `x` directed by `u` with the ball.
pub fn tangency_point(x: &Point, u: &Vector, center: &Point) -> Option<Point> {
    let dir = u.normalized()?;
    Some(x.axpy(dir.dot(&(center - x)), &dir))
}

/// Single-obstacle law: nominal when `[x, x_d]` misses obstacle `id`, projected otherwise.
pub fn single_obstacle_control(
    x: &Point,
    x_d: &Point,
    world: &World,
    id: usize,
    params: &ControlParams,
) -> Result<ControlOutput> {
    let (c, r) = disc(world, id)?;
    let u_d = nominal(x, x_d, params.gamma);
    if !world.obstacles[id].segment_intersects(x, x_d) {
        return Ok(ControlOutput { u: u_d, mode: Mode::Visible, trace: ProjectionTrace::default() });
    }
    let (u, beta, theta) = constrain(&u_d, x, c, r, id)?;
    let tangency = tangency_point(x, &u, c);
    let degenerate = tangency.is_none();
    Ok(ControlOutput {
        u: u.clone(),
        mode: Mode::Projected,
        trace: ProjectionTrace { steps: vec![ProjectionStep { obstacle: id, u, tangency, beta, theta }], degenerate },
    })
}

fn argmin_by<F: Fn(usize) -> f64>(ids: &[usize], key: F) -> Option<usize> {
    // strict comparison keeps the lowest id on ties
    let mut best: Option<(usize, f64)> = None;
    for &id in ids {
        let k = key(id);
        if best.is_none_or(|(_, b)| k < b) {
            best = Some((id, k));
        }
    }
    best.map(|b| b.0)
}

/// Multi-obstacle law with successive projections.
pub fn control(x: &Point, x_d: &Point, world: &World, params: &ControlParams) -> Result<ControlOutput> {
    if !world.all_discs() {
        return Err(NavError::Unsupported("the map-based controller needs disc obstacles".into()));
    }
    if x.dim() != world.dim || x_d.dim() != world.dim {
        return Err(NavError::DimensionMismatch {
            expected: world.dim,
            got: if x.dim() != world.dim { x.dim() } else { x_d.dim() },
        });
    }
    let u_d = nominal(x, x_d, params.gamma);
    let blocking = blocking_obstacles(x, x_d, world);
    let distance_to_goal = |k: usize| {
        let (c, r) = world.obstacles[k].as_disc().expect("all discs");
        x_d.distance(c) - r
    };
    let Some(mut current) = argmin_by(&blocking, distance_to_goal) else {
        return Ok(ControlOutput { u: u_d, mode: Mode::Visible, trace: ProjectionTrace::default() });
    };
    let limit = params.depth_limit(world.len());
    let mut trace = ProjectionTrace::default();
    let mut u = u_d;
    loop {
        if trace.depth() == limit {
            let mut sequence = trace.obstacle_sequence();
            sequence.push(current);
            return Err(NavError::ProjectionCycle { max_depth: limit, sequence });
        }
        let (c, r) = world.obstacles[current].as_disc().expect("all discs");
        let (next_u, beta, theta) = constrain(&u, x, c, r, current)?;
        u = next_u;
        let tangency = tangency_point(x, &u, c);
        trace.steps.push(ProjectionStep { obstacle: current, u: u.clone(), tangency: tangency.clone(), beta, theta });
        let Some(tangency) = tangency else {
            trace.degenerate = true;
            u = Vector::zeros(world.dim);
            break;
        };
        // the tangent segment touches the current obstacle at its endpoint
        let next: Vec<usize> = blocking_obstacles(x, &tangency, world).into_iter().filter(|&k| k != current).collect();
        let from = current;
        let separation = |k: usize| {
            let (ck, rk) = world.obstacles[k].as_disc().expect("all discs");
            c.distance(ck) - r - rk
        };
        match argmin_by(&next, separation) {
            Some(k) => {
                debug_assert_ne!(k, from);
                current = k;
            }
            None => break,
        }
    }
    Ok(ControlOutput { u, mode: Mode::Projected, trace })
}

/// Intermediate destinations `P_1 … P_h`; `[x_d]` when `x` sees the destination.
pub fn virtual_destination(x: &Point, x_d: &Point, world: &World, params: &ControlParams) -> Result<Vec<Point>> {
    let out = control(x, x_d, world, params)?;
    Ok(match out.mode {
        Mode::Visible => vec![x_d.clone()],
        Mode::Projected => out.trace.virtual_destinations(x),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::angle;
    use crate::world::{random_world, sample_ball, Obstacle, RandomWorldSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> Point {
        Vector::new2(x, y)
    }

    /// Brute-force minimum over cone-parallel unit directions of the angle to
    /// `u`. The cone surface is swept exactly by an azimuth with `samples` steps.
    pub(crate) fn brute_cone_direction(u: &Vector, axis: &Vector, theta: f64, samples: usize) -> (Vector, f64) {
        let a = axis.normalized().unwrap();
        let n = a.dim();
        // orthonormal frame of the complement of the axis
        let mut frame: Vec<Vector> = Vec::new();
        for k in 0..n {
            let mut e = Vector::basis(n, k);
            e = e.axpy(-e.dot(&a), &a);
            for f in &frame {
                e = e.axpy(-e.dot(f), f);
            }
            if e.norm() > 1e-6 && frame.len() < n - 1 {
                frame.push(e.normalized().unwrap());
            }
        }
        let mut best = (a.clone(), f64::INFINITY);
        for s in 0..samples {
            let phi = std::f64::consts::TAU * s as f64 / samples as f64;
            let radial = if n == 2 {
                if s % 2 == 0 {
                    frame[0].clone()
                } else {
                    -&frame[0]
                }
            } else {
                &frame[0] * phi.cos() + &frame[1] * phi.sin()
            };
            let d = &a * theta.cos() + radial * theta.sin();
            let ang = angle(u, &d).unwrap();
            if ang < best.1 {
                best = (d, ang);
            }
        }
        best
    }

    fn one_disc(c: [f64; 2], r: f64) -> World {
        World::new(2, 20.0, vec![Obstacle::disc(c, r)]).unwrap()
    }

    #[test]
    fn xi_on_cone_surface_is_identity() {
        let w = one_disc([0.0, 0.0], 1.0);
        let x = v2(-4.0, 0.0);
        let theta = 0.25f64.asin();
        let u = Vector::polar(theta) * 3.0;
        assert!(xi(&u, &x, &w, 0).unwrap().max_abs_diff(&u) < 1e-12);
    }

    #[test]
    fn xi_on_axis_is_zero() {
        let w = one_disc([0.0, 0.0], 1.0);
        let out = xi(&v2(8.0, 0.0), &v2(-4.0, 0.0), &w, 0).unwrap();
        assert!(out.norm() < 1e-12);
    }

    #[test]
    fn xi_matches_discretized_direction_search() {
        let w = one_disc([0.0, 0.0], 1.0);
        let x = v2(-4.0, 0.0);
        let theta = 0.25f64.asin();
        let u = v2(8.0, 0.3);
        let out = xi(&u, &x, &w, 0).unwrap();
        let axis = v2(4.0, 0.0);
        assert!((angle(&out, &axis).unwrap() - theta).abs() < 1e-9);
        // a million planar unit directions; keep those within one grid step of the cone
        let samples = 1_000_000;
        let step = std::f64::consts::TAU / samples as f64;
        let mut best = (f64::INFINITY, Vector::zeros(2));
        for s in 0..samples {
            let d = Vector::polar(s as f64 * step);
            if (angle(&d, &axis).unwrap() - theta).abs() <= step {
                let a = angle(&u, &d).unwrap();
                if a < best.0 {
                    best = (a, d);
                }
            }
        }
        assert!(angle(&out, &best.1).unwrap() < 1e-4);
        assert!(out.y() > 0.0, "upper tangent expected for u leaning up");
    }

    #[test]
    fn xi_rejects_outside_cone_and_inside_ball() {
        let w = one_disc([0.0, 0.0], 1.0);
        let err = xi(&v2(0.0, 1.0), &v2(-4.0, 0.0), &w, 0).unwrap_err();
        assert!(matches!(err, NavError::OutsideConeRegion { id: 0, .. }));
        let err = xi(&v2(1.0, 0.0), &v2(0.2, 0.0), &w, 0).unwrap_err();
        assert_eq!(err, NavError::InsideObstacle { id: 0 });
        assert_eq!(xi(&Vector::zeros(2), &v2(-4.0, 0.0), &w, 0).unwrap_err(), NavError::ZeroVector);
    }

    #[test]
    fn single_obstacle_branches() {
        let w = one_disc([0.0, 0.0], 1.0);
        let p = ControlParams::default();
        let xd = v2(-4.0, 0.0);
        let x = v2(0.0, 3.0);
        let out = single_obstacle_control(&x, &xd, &w, 0, &p).unwrap();
        assert_eq!(out.mode, Mode::Visible);
        assert!(out.u.max_abs_diff(&(&xd - &x)) < 1e-15);
        // antipodal ray: zero command
        let out = single_obstacle_control(&v2(3.0, 0.0), &xd, &w, 0, &p).unwrap();
        assert!(out.u.norm() < 1e-12);
        assert!(out.trace.degenerate);
        // exit set: both branches agree
        let phi = 0.25f64.asin();
        let on_exit = xd.axpy(4.0 * phi.cos() + 2.0, &Vector::polar(phi));
        let out = single_obstacle_control(&on_exit, &xd, &w, 0, &p).unwrap();
        let u_d = nominal(&on_exit, &xd, 1.0);
        assert!((&out.u - &u_d).norm() <= 1e-6 * u_d.norm());
    }

    #[test]
    fn control_visible_and_single() {
        let w = one_disc([0.0, 0.0], 1.0);
        let p = ControlParams::default();
        let xd = v2(-4.0, 0.0);
        let out = control(&v2(-4.0, 3.0), &xd, &w, &p).unwrap();
        assert_eq!(out.mode, Mode::Visible);
        assert_eq!(out.trace.depth(), 0);
        assert_eq!(virtual_destination(&v2(-4.0, 3.0), &xd, &w, &p).unwrap(), vec![xd.clone()]);
        let x = v2(3.0, 0.5);
        let a = control(&x, &xd, &w, &p).unwrap();
        let b = single_obstacle_control(&x, &xd, &w, 0, &p).unwrap();
        assert_eq!(a, b);
        let vd = virtual_destination(&x, &xd, &w, &p).unwrap();
        assert_eq!(vd.len(), 1);
        assert!((angle(&(&vd[0] - &x), &(-&x)).unwrap() - (1.0 / x.norm()).asin()).abs() < 1e-9);
    }

    #[test]
    fn two_obstacle_chain() {
        let xd = v2(0.0, 0.0);
        let w = World::new(2, 20.0, vec![Obstacle::disc([3.0, 0.0], 1.0), Obstacle::disc([6.0, 1.2], 0.8)]).unwrap();
        // just above the axis so the first projection picks the upper tangent
        let x = v2(9.0, 0.05);
        let p = ControlParams::default();
        let out = control(&x, &xd, &w, &p).unwrap();
        assert_eq!(out.mode, Mode::Projected);
        assert_eq!(out.trace.obstacle_sequence(), vec![0, 1]);
        // oracle: brute-force cone search applied twice
        let u_d = nominal(&x, &xd, 1.0);
        let mut u = u_d.clone();
        for (id, step) in [0usize, 1].into_iter().zip(&out.trace.steps) {
            let (c, r) = w.obstacles[id].as_disc().unwrap();
            let axis = c - &x;
            let theta = (r / axis.norm()).asin();
            let (dir, _) = brute_cone_direction(&u, &axis, theta, 2);
            assert!(angle(&step.u, &dir).unwrap() < 1e-9);
            assert!((angle(&step.u, &axis).unwrap() - theta).abs() < 1e-7);
            u = step.u.clone();
        }
        let last = out.trace.steps.last().unwrap();
        let t = last.tangency.clone().unwrap();
        assert!(blocking_obstacles(&x, &t, &w).iter().all(|&k| k == 1));
        let vd = virtual_destination(&x, &xd, &w, &p).unwrap();
        assert_eq!(vd.len(), 2);
        assert!(angle(&(&vd[0] - &x), &(&xd - &x)).unwrap() > 0.0);
    }

    #[test]
    fn depth_cap_reports_cycle() {
        let xd = v2(0.0, 0.0);
        let w = World::new(2, 20.0, vec![Obstacle::disc([3.0, 0.0], 1.0), Obstacle::disc([6.0, 1.2], 0.8)]).unwrap();
        let p = ControlParams { max_depth: Some(1), ..Default::default() };
        assert!(p.validate(2).is_err());
        let err = control(&v2(9.0, 0.05), &xd, &w, &p).unwrap_err();
        assert_eq!(err, NavError::ProjectionCycle { max_depth: 1, sequence: vec![0, 1] });
    }

    #[test]
    fn non_disc_world_unsupported() {
        let w = World::new(2, 20.0, vec![Obstacle::ellipse([3.0, 0.0], [1.0, 0.5], 0.0)]).unwrap();
        assert!(matches!(
            control(&v2(9.0, 0.0), &v2(0.0, 0.0), &w, &ControlParams::default()),
            Err(NavError::Unsupported(_))
        ));
    }

    fn world_for(seed: u64, n: usize, xd: &Point) -> World {
        random_world(&RandomWorldSpec {
            seed,
            m: 8,
            n,
            r0: 10.0,
            min_separation: 0.4,
            radius_range: (0.4, 1.4),
            keep_clear: vec![xd.clone()],
        })
        .unwrap()
    }

    #[test]
    fn xi_optimal_against_exact_cone_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let c = sample_ball(&mut rng, 3, 3.0);
            let r = rng.random_range(0.2..1.5);
            let x = sample_ball(&mut rng, 3, 8.0);
            if x.distance(&c) <= r * 1.01 {
                continue;
            }
            let axis = &c - &x;
            let theta = (r / axis.norm()).asin();
            let u = sample_ball(&mut rng, 3, 2.0);
            if u.norm() < 1e-3 || angle(&u, &axis).unwrap() > theta {
                continue;
            }
            let (out, _, _) = project_on_ball(&u, &x, &c, r, 0).unwrap();
            let ours = angle(&u, &out).unwrap();
            let (_, brute) = brute_cone_direction(&u, &axis, theta, 10_000);
            assert!(brute >= ours - 1e-5, "brute {brute} beats {ours}");
            checked += 1;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn last_projection_is_cone_parallel(seed in 0u64..500, n in 2usize..4) {
            let xd = Vector::zeros(n);
            let w = world_for(seed, n, &xd);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..50 {
                let x = sample_ball(&mut rng, n, 10.0);
                if w.clearance(&x) <= 0.0 {
                    continue;
                }
                let out = control(&x, &xd, &w, &ControlParams::default()).unwrap();
                if out.mode == Mode::Projected && out.u.norm() > 1e-9 {
                    let last = out.trace.steps.last().unwrap();
                    let (c, _) = w.obstacles[last.obstacle].as_disc().unwrap();
                    prop_assert!((angle(&out.u, &(c - &x)).unwrap() - last.theta).abs() < 1e-7);
                }
                if out.mode == Mode::Visible {
                    prop_assert!(out.u.max_abs_diff(&(&xd - &x)) < 1e-12);
                }
            }
        }

        #[test]
        fn tangent_on_active_boundary(seed in 0u64..500, s in 0.0f64..1.0) {
            let xd = v2(0.0, 0.0);
            let w = world_for(seed, 2, &xd);
            for id in 0..w.len() {
                let (c, r) = w.obstacles[id].as_disc().unwrap();
                let x = c.axpy(r, &Vector::polar(std::f64::consts::TAU * s));
                if w.clearance(&x) < -1e-9 {
                    continue;
                }
                let Ok(out) = control(&x, &xd, &w, &ControlParams::default()) else { continue };
                for step in &out.trace.steps {
                    if step.obstacle == id {
                        // relative: boundary samples sit ~1e-16 off the sphere and asin amplifies that
                        prop_assert!(out.u.dot(&(c - &x)) <= 1e-7 * out.u.norm() * r, "u points into obstacle {id}: {out:?} at {x:?}");
                    }
                }
            }
        }

        #[test]
        fn continuity_on_exit_set(d in 0.5f64..6.0, r in 0.3f64..1.5, t in 0.01f64..5.0, up in any::<bool>()) {
            let xd = v2(0.0, 0.0);
            let c = v2(d + r, 0.0);
            let w = World::new(2, 20.0, vec![Obstacle::disc([d + r, 0.0], r)]).unwrap();
            let phi = (r / (d + r)).asin();
            let dir = Vector::polar(if up { phi } else { -phi });
            let x = xd.axpy((d + r) * phi.cos() + t, &dir);
            prop_assume!(x.norm() < 19.0 && x.distance(&c) > r);
            let out = control(&x, &xd, &w, &ControlParams::default()).unwrap();
            let u_d = nominal(&x, &xd, 1.0);
            prop_assert!((&out.u - &u_d).norm() <= 1e-6 * u_d.norm());
        }
    }
}
