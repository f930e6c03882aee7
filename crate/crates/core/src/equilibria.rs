//! Undesired equilibria of the map-based and sensor-based laws.
//!
//! The map-based law vanishes where the command reaching an obstacle points
//! straight at its center. Those points lie on rays from the center: away
//! from `x_d` for a first projection, and along lines tangent to the ancestor
//! obstacle otherwise. Each candidate ray is sampled and the zeros of the law
//! are certified numerically.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller_map::{control, ControlParams};
use crate::error::Result;
use crate::geometry::{ray_ball_exit, ray_sphere_roots, Point, Vector};
use crate::visibility::{hat_distance, open_hat_contains, practical_shadow_contains};
use crate::world::{farthest_point_candidates, Obstacle, World};

/// Sampling step along candidate rays, relative to the workspace radius.
pub const SAMPLE_STEP: f64 = 1e-3;
/// Zero test on the command, relative to `γ r0`.
pub const ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumLine {
    pub obstacle: usize,
    pub segments: Vec<(Point, Point)>,
}

impl EquilibriumLine {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Unit directions of the segments, pointing away from the obstacle.
    pub fn directions(&self, center: &Point) -> Vec<Vector> {
        self.segments
            .iter()
            .filter_map(|(a, b)| {
                let far = if a.distance(center) >= b.distance(center) { a } else { b };
                (far - center).normalized()
            })
            .collect()
    }
}

/// Candidate ray from a center: points `center + s · direction` for `s ≥ start`.
#[derive(Debug, Clone)]
struct Ray {
    origin: Point,
    direction: Vector,
    start: f64,
}

/// Tangent directions from `p` to the ball `B(c, r)` within the plane spanned
/// by `c − p` and `hint`; empty when `p` is inside or the plane degenerates.
fn tangent_directions(p: &Point, c: &Point, r: f64, hint: &Vector) -> Vec<Vector> {
    let to_c = c - p;
    let d = to_c.norm();
    if d <= r {
        return Vec::new();
    }
    let axis = to_c * (1.0 / d);
    let Some(side) = hint.axpy(-hint.dot(&axis), &axis).normalized() else {
        return Vec::new();
    };
    let theta = (r / d).asin();
    let (s, co) = theta.sin_cos();
    vec![&axis * co + &side * s, &axis * co - &side * s]
}

fn candidate_rays(world: &World, x_d: &Point, id: usize) -> Vec<Ray> {
    let (c, r) = world.obstacles[id].as_disc().expect("disc world");
    let mut rays = Vec::new();
    if let Some(dir) = (c - x_d).normalized() {
        rays.push(Ray { origin: c.clone(), direction: dir, start: r });
    }
    for (k, o) in world.obstacles.iter().enumerate() {
        if k == id {
            continue;
        }
        let (ck, rk) = o.as_disc().expect("disc world");
        // plane through both centers and the destination; any normal direction if collinear
        let mut hint = x_d - c;
        if hint.axpy(-hint.dot(&(ck - c)) / (ck - c).norm_squared(), &(ck - c)).norm() < 1e-12 * world.r0() {
            hint = Vector::basis(world.dim, if (ck - c)[0].abs() < (ck - c)[1].abs() { 0 } else { 1 });
        }
        for t in tangent_directions(c, ck, rk, &hint) {
            rays.push(Ray { origin: c.clone(), direction: -&t, start: r });
        }
    }
    rays
}

fn is_zero_of(world: &World, x_d: &Point, params: &ControlParams, id: usize, q: &Point) -> bool {
    if world.clearance(q) < 0.0 {
        return false;
    }
    let tol = ZERO_TOL * params.gamma * world.r0();
    match control(q, x_d, world, params) {
        Ok(out) => {
            out.trace.degenerate && out.trace.steps.last().is_some_and(|s| s.obstacle == id) && out.u.norm() <= tol
        }
        Err(_) => false,
    }
}

/// Maximal runs of `pred` along a ray, with endpoints refined by bisection.
fn runs_along<F: Fn(&Point) -> bool>(ray: &Ray, end: f64, step: f64, pred: F) -> Vec<(Point, Point)> {
    let at = |s: f64| ray.origin.axpy(s, &ray.direction);
    let refine = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..40 {
            let m = 0.5 * (a + b);
            if pred(&at(m)) {
                a = m;
            } else {
                b = m;
            }
        }
        a
    };
    let count = ((end - ray.start) / step).ceil().max(0.0) as usize;
    let samples: Vec<f64> = (0..=count).map(|k| (ray.start + k as f64 * step).min(end)).collect();
    let flags: Vec<bool> = samples.iter().map(|&s| pred(&at(s))).collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < samples.len() {
        if !flags[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k + 1 < samples.len() && flags[k + 1] {
            k += 1;
        }
        let lo = if first == 0 { samples[0] } else { refine(samples[first], samples[first - 1]) };
        let hi = if k + 1 == samples.len() { samples[k] } else { refine(samples[k], samples[k + 1]) };
        out.push((at(lo), at(hi)));
        k += 1;
    }
    out
}

fn ray_end(world: &World, ray: &Ray) -> f64 {
    let zero = Vector::zeros(world.dim);
    ray_ball_exit(&ray.origin, &ray.direction, &zero, world.r0()).unwrap_or(0.0)
}

/// Equilibrium segments of the map-based law, one entry per obstacle.
pub fn undesired_segments_map(world: &World, x_d: &Point, params: &ControlParams) -> Result<Vec<EquilibriumLine>> {
    if !world.all_discs() {
        return Err(crate::NavError::Unsupported("map-based equilibria need disc obstacles".into()));
    }
    let step = SAMPLE_STEP * world.r0();
    Ok((0..world.len())
        .into_par_iter()
        .map(|id| {
            let mut segments = Vec::new();
            for ray in candidate_rays(world, x_d, id) {
                let end = ray_end(world, &ray);
                for seg in runs_along(&ray, end, step, |q| is_zero_of(world, x_d, params, id, q)) {
                    if !segments
                        .iter()
                        .any(|s: &(Point, Point)| s.0.distance(&seg.0) < step && s.1.distance(&seg.1) < step)
                    {
                        segments.push(seg);
                    }
                }
            }
            EquilibriumLine { obstacle: id, segments }
        })
        .collect())
}

/// Obstacles crossed by one central half-line and the exempt prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossedSet {
    pub obstacle: usize,
    /// Unit direction of the half-line from the center.
    pub direction: Vector,
    /// Crossed obstacles ordered by distance from the generating obstacle.
    pub crossed: Vec<usize>,
    /// Leading part of `crossed` that cannot generate equilibria.
    pub exempt: Vec<usize>,
    pub order: usize,
}

/// Obstacles met by the half-line, ordered by `‖c_i − c_j‖ − r_j`, ties by id.
fn crossed_by(world: &World, id: usize, direction: &Vector) -> Vec<usize> {
    let (c, _) = world.obstacles[id].as_disc().expect("disc world");
    let mut hit: Vec<(f64, usize)> = world
        .obstacles
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != id)
        .filter_map(|(j, o)| {
            let (cj, rj) = o.as_disc().expect("disc world");
            ray_sphere_roots(c, direction, cj, rj).filter(|&(_, t1)| t1 >= 0.0).map(|_| (c.distance(cj) - rj, j))
        })
        .collect();
    hit.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hit.into_iter().map(|(_, j)| j).collect()
}

/// Exit point of the half-line through obstacle `k` (farthest from the origin).
fn far_crossing(world: &World, id: usize, direction: &Vector, k: usize) -> Point {
    let (c, _) = world.obstacles[id].as_disc().expect("disc world");
    let (ck, rk) = world.obstacles[k].as_disc().expect("disc world");
    let (_, t1) = ray_sphere_roots(c, direction, ck, rk).expect("crossed obstacle");
    c.axpy(t1, direction)
}

/// Walks the crossed obstacles in order and returns how many pass both hat
/// conditions before the first failure.
fn exempt_prefix(world: &World, id: usize, direction: &Vector, crossed: &[usize]) -> usize {
    let tol = world.length_tol();
    for (p, &k) in crossed.iter().enumerate() {
        let vertex = far_crossing(world, id, direction, k);
        // hats of the generating obstacle and of the already exempt ones
        let hat_owners: Vec<usize> = std::iter::once(id).chain(crossed[..p].iter().copied()).collect();
        let (ck, _) = world.obstacles[k].as_disc().expect("disc world");
        let covered = hat_owners.iter().any(|&j| {
            let (cj, rj) = world.obstacles[j].as_disc().expect("disc world");
            open_hat_contains(ck, &vertex, cj, rj).unwrap_or(false)
        });
        if !covered {
            return p;
        }
        let allowed: Vec<usize> = hat_owners.iter().copied().chain(std::iter::once(k)).collect();
        let clear = world.obstacles.iter().enumerate().filter(|(l, _)| !allowed.contains(l)).all(|(_, o)| {
            let (cl, rl) = o.as_disc().expect("disc world");
            hat_owners.iter().all(|&j| {
                let (cj, rj) = world.obstacles[j].as_disc().expect("disc world");
                hat_distance(cl, &vertex, cj, rj).map(|d| d >= rl - tol).unwrap_or(true)
            })
        });
        if !clear {
            return p;
        }
    }
    crossed.len()
}

/// Crossed sets of every central half-line supported by the given equilibrium lines.
pub fn lemma5_exemptions(world: &World, lines: &[EquilibriumLine]) -> Vec<CrossedSet> {
    let mut out = Vec::new();
    for line in lines {
        let (c, _) = world.obstacles[line.obstacle].as_disc().expect("disc world");
        let mut seen: Vec<Vector> = Vec::new();
        for dir in line.directions(c) {
            if seen.iter().any(|d| d.distance(&dir) < 1e-6) {
                continue;
            }
            seen.push(dir.clone());
            let crossed = crossed_by(world, line.obstacle, &dir);
            let order = exempt_prefix(world, line.obstacle, &dir, &crossed);
            out.push(CrossedSet {
                obstacle: line.obstacle,
                exempt: crossed[..order].to_vec(),
                direction: dir,
                crossed,
                order,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption3Report {
    pub holds: bool,
    /// `(generator, crossed)` pairs where a central half-line crosses a
    /// non-exempt obstacle.
    pub witnesses: Vec<(usize, usize)>,
}

/// Every central half-line crosses only exempt obstacles.
pub fn assumption3_check(world: &World, x_d: &Point, params: &ControlParams) -> Result<Assumption3Report> {
    let lines = undesired_segments_map(world, x_d, params)?;
    Ok(assumption3_from(world, &lines))
}

pub fn assumption3_from(world: &World, lines: &[EquilibriumLine]) -> Assumption3Report {
    let mut witnesses = Vec::new();
    for set in lemma5_exemptions(world, lines) {
        for &i in &set.crossed {
            if !set.exempt.contains(&i) && !witnesses.contains(&(set.obstacle, i)) {
                witnesses.push((set.obstacle, i));
            }
        }
    }
    Assumption3Report { holds: witnesses.is_empty(), witnesses }
}

/// Equilibrium segments of the sensor-based law: the ray from the far point
/// of each obstacle away from `x_d`, kept where it lies in the practical shadow.
pub fn undesired_segments_sensor(world: &World, x_d: &Point, range: f64) -> Result<Vec<EquilibriumLine>> {
    if world.dim != 2 {
        return Err(crate::NavError::Unsupported("sensor equilibria are planar".into()));
    }
    let step = SAMPLE_STEP * world.r0();
    (0..world.len())
        .into_par_iter()
        .map(|id| {
            let o = &world.obstacles[id];
            let (anchor, start) = match o {
                Obstacle::Disc { center, radius } => (center.clone(), *radius),
                _ => {
                    let far = farthest_point_candidates(o, x_d)
                        .into_iter()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|(p, _)| p)
                        .unwrap_or_else(|| o.reference_point());
                    (far, 0.0)
                }
            };
            let Some(direction) = (&anchor - x_d).normalized() else {
                return Ok(EquilibriumLine { obstacle: id, segments: Vec::new() });
            };
            let ray = Ray { origin: anchor, direction, start };
            let end = ray_end(world, &ray);
            let segments = runs_along(&ray, end, step, |q| {
                world.clearance(q) >= -world.length_tol()
                    && practical_shadow_contains(q, x_d, world, id, range).unwrap_or(false)
            });
            Ok(EquilibriumLine { obstacle: id, segments })
        })
        .collect()
}

/// One row of the equilibrium report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub obstacle_id: usize,
    pub segments: Vec<(Point, Point)>,
    pub exempt: bool,
    pub assumption3: bool,
}

/// Per-obstacle equilibrium summary of the map-based law.
pub fn equilibrium_report(world: &World, x_d: &Point, params: &ControlParams) -> Result<Vec<ReportEntry>> {
    let lines = undesired_segments_map(world, x_d, params)?;
    let sets = lemma5_exemptions(world, &lines);
    let a3 = assumption3_from(world, &lines);
    Ok(lines
        .into_iter()
        .map(|line| {
            let id = line.obstacle;
            ReportEntry {
                obstacle_id: id,
                exempt: sets.iter().any(|s| s.exempt.contains(&id)),
                assumption3: !a3.witnesses.iter().any(|&(k, i)| k == id || i == id),
                segments: line.segments,
            }
        })
        .collect())
}
