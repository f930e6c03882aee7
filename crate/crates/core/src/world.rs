//! Workspace, obstacles, assumption checks, dilation and random generation.
//!
//! Obstacle ids are their indices in `World::obstacles`. Discs live in any
//! dimension; ellipses and polygons are planar.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geometry::{point_segment_distance, ray_ball_entry, ray_ball_exit, Point, Vector, LENGTH_TOL};

/// Boundary samples used by the curvature test and sampled separations.
pub const CURVATURE_SAMPLES: usize = 3600;
/// Vertex count of the polygon that replaces a dilated ellipse.
pub const ELLIPSE_OFFSET_SEGMENTS: usize = 720;
/// Strict separations in the world assumptions are enforced with this margin (× r0).
pub const SEPARATION_MARGIN: f64 = 1e-6;
/// Rejections allowed per obstacle before random generation gives up.
pub const MAX_REJECTIONS: usize = 10_000;

/// Origin-centred spherical workspace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub r0: f64,
}

impl Workspace {
    pub fn new(r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(NavError::InvalidParameter(format!("workspace radius {r0} must be positive")));
        }
        Ok(Workspace { r0 })
    }

    /// Workspace shrunk by `r` (Minkowski erosion of a ball).
    pub fn erode(&self, r: f64) -> Result<Workspace> {
        if !(r > 0.0) {
            return Err(NavError::InvalidParameter(format!("erosion radius {r} must be positive")));
        }
        if r >= self.r0 {
            return Err(NavError::InvalidParameter(format!(
                "erosion radius {r} consumes workspace radius {}",
                self.r0
            )));
        }
        Ok(Workspace { r0: self.r0 - r })
    }
}

/// A closed obstacle. Polygons list their vertices counter-clockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    Disc {
        center: Point,
        radius: f64,
    },
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
        rotation: f64,
    },
    Polygon {
        vertices: Vec<Point>,
    },
    /// Convex polygon dilated by `radius`: straight edges joined by circular corners.
    RoundedPolygon {
        vertices: Vec<Point>,
        radius: f64,
    },
}

impl Obstacle {
    pub fn disc(center: impl Into<Point>, radius: f64) -> Obstacle {
        Obstacle::Disc { center: center.into(), radius }
    }

    pub fn ellipse(center: impl Into<Point>, semi_axes: [f64; 2], rotation: f64) -> Obstacle {
        Obstacle::Ellipse { center: center.into(), semi_axes, rotation }
    }

    pub fn polygon(vertices: Vec<Point>) -> Obstacle {
        Obstacle::Polygon { vertices }
    }

    pub fn is_disc(&self) -> bool {
        matches!(self, Obstacle::Disc { .. })
    }

    /// `(center, radius)` for discs.
    pub fn as_disc(&self) -> Option<(&Point, f64)> {
        match self {
            Obstacle::Disc { center, radius } => Some((center, *radius)),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Obstacle::Disc { center, .. } | Obstacle::Ellipse { center, .. } => center.dim(),
            Obstacle::Polygon { vertices } | Obstacle::RoundedPolygon { vertices, .. } => {
                vertices.first().map_or(2, |v| v.dim())
            }
        }
    }

    /// Interior point used as the obstacle's nominal centre.
    pub fn reference_point(&self) -> Point {
        match self {
            Obstacle::Disc { center, .. } | Obstacle::Ellipse { center, .. } => center.clone(),
            Obstacle::Polygon { vertices } | Obstacle::RoundedPolygon { vertices, .. } => centroid(vertices),
        }
    }

    /// A ball containing the obstacle.
    pub fn bounding_ball(&self) -> (Point, f64) {
        match self {
            Obstacle::Disc { center, radius } => (center.clone(), *radius),
            Obstacle::Ellipse { center, semi_axes, .. } => (center.clone(), semi_axes[0].max(semi_axes[1])),
            Obstacle::Polygon { vertices } => {
                let c = centroid(vertices);
                let r = vertices.iter().map(|v| v.distance(&c)).fold(0.0, f64::max);
                (c, r)
            }
            Obstacle::RoundedPolygon { vertices, radius } => {
                let c = centroid(vertices);
                let r = vertices.iter().map(|v| v.distance(&c)).fold(0.0, f64::max);
                (c, r + radius)
            }
        }
    }

    /// Signed distance to the boundary: positive outside, negative inside.
    pub fn signed_distance(&self, q: &Point) -> f64 {
        match self {
            Obstacle::Disc { center, radius } => q.distance(center) - radius,
            Obstacle::Ellipse { center, semi_axes, rotation } => {
                let local = to_local(q, center, *rotation);
                ellipse_signed_distance(semi_axes[0], semi_axes[1], local.0, local.1)
            }
            Obstacle::Polygon { vertices } => polygon_signed_distance(vertices, q),
            Obstacle::RoundedPolygon { vertices, radius } => polygon_signed_distance(vertices, q) - radius,
        }
    }

    /// Closest boundary point to `q`.
    pub fn closest_boundary_point(&self, q: &Point) -> Point {
        match self {
            Obstacle::Disc { center, radius } => match (q - center).normalized() {
                Some(d) => center.axpy(*radius, &d),
                None => center.axpy(*radius, &Vector::basis(center.dim(), 0)),
            },
            Obstacle::Ellipse { center, semi_axes, rotation } => {
                let (lx, ly) = to_local(q, center, *rotation);
                let (px, py) = ellipse_closest_point(semi_axes[0], semi_axes[1], lx, ly);
                from_local(px, py, center, *rotation)
            }
            Obstacle::Polygon { vertices } => polygon_closest_boundary_point(vertices, q),
            Obstacle::RoundedPolygon { vertices, radius } => {
                let core = polygon_closest_boundary_point(vertices, q);
                let out = if polygon_contains(vertices, q) {
                    // inside the core: push outward along the nearest edge normal
                    (&core - q).normalized().unwrap_or_else(|| Vector::new2(1.0, 0.0))
                } else {
                    (q - &core).normalized().unwrap_or_else(|| Vector::new2(1.0, 0.0))
                };
                core.axpy(*radius, &out)
            }
        }
    }

    /// Ray parameter of the first contact with the solid obstacle along the
    /// unit direction `dir`; `0` from the interior.
    pub fn ray_hit(&self, origin: &Point, dir: &Vector) -> Option<f64> {
        let (bc, br) = self.bounding_ball();
        ray_ball_entry(origin, dir, &bc, br)?;
        match self {
            Obstacle::Disc { center, radius } => ray_ball_entry(origin, dir, center, *radius),
            Obstacle::Ellipse { center, semi_axes, rotation } => {
                let (ox, oy) = to_local(origin, center, *rotation);
                let (dx, dy) = rotate_back(dir.x(), dir.y(), *rotation);
                let (a, b) = (semi_axes[0], semi_axes[1]);
                let (ox, oy, dx, dy) = (ox / a, oy / b, dx / a, dy / b);
                let qa = dx * dx + dy * dy;
                let qb = ox * dx + oy * dy;
                let qc = ox * ox + oy * oy - 1.0;
                let disc = qb * qb - qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-qb - sq) / qa;
                let t1 = (-qb + sq) / qa;
                if t0 >= 0.0 {
                    Some(t0)
                } else if t1 > 1e-12 * a.max(b) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Obstacle::Polygon { vertices } => polygon_ray_entry(vertices, origin, dir),
            Obstacle::RoundedPolygon { vertices, radius } => {
                if polygon_signed_distance(vertices, origin) < *radius {
                    return Some(0.0);
                }
                rounded_polygon_ray_entry(vertices, *radius, origin, dir)
            }
        }
    }

    /// True iff the closed obstacle meets the segment `[a, b]`.
    pub fn segment_intersects(&self, a: &Point, b: &Point) -> bool {
        match self {
            Obstacle::Disc { center, radius } => point_segment_distance(center, a, b) <= *radius,
            Obstacle::Ellipse { center, semi_axes, rotation } => {
                let (ax, ay) = to_local(a, center, *rotation);
                let (bx, by) = to_local(b, center, *rotation);
                let (ax, ay) = (ax / semi_axes[0], ay / semi_axes[1]);
                let (bx, by) = (bx / semi_axes[0], by / semi_axes[1]);
                let (dx, dy) = (bx - ax, by - ay);
                let len2 = dx * dx + dy * dy;
                let s = if len2 > 0.0 { (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (px, py) = (ax + s * dx, ay + s * dy);
                px * px + py * py <= 1.0
            }
            Obstacle::Polygon { vertices } => segment_polygon_distance(vertices, a, b) <= 0.0,
            Obstacle::RoundedPolygon { vertices, radius } => segment_polygon_distance(vertices, a, b) <= *radius,
        }
    }

    /// `count` points on the boundary in counter-clockwise order (planar shapes),
    /// plus every polygon vertex. Discs of dimension > 2 are sampled in the first two axes.
    pub fn boundary_samples(&self, count: usize) -> Vec<Point> {
        let count = count.max(3);
        match self {
            Obstacle::Disc { center, radius } => (0..count)
                .map(|k| {
                    let t = TAU * k as f64 / count as f64;
                    let mut p = center.clone();
                    p[0] += radius * t.cos();
                    p[1] += radius * t.sin();
                    p
                })
                .collect(),
            Obstacle::Ellipse { center, semi_axes, rotation } => (0..count)
                .map(|k| {
                    let t = TAU * k as f64 / count as f64;
                    from_local(semi_axes[0] * t.cos(), semi_axes[1] * t.sin(), center, *rotation)
                })
                .collect(),
            Obstacle::Polygon { vertices } => sample_polyline(vertices, count),
            Obstacle::RoundedPolygon { vertices, radius } => sample_rounded_polygon(vertices, *radius, count),
        }
    }

    /// Largest distance from the origin to a point of the obstacle.
    pub fn max_norm(&self) -> f64 {
        match self {
            Obstacle::Disc { center, radius } => center.norm() + radius,
            Obstacle::Polygon { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Obstacle::RoundedPolygon { vertices, radius } => {
                vertices.iter().map(|v| v.norm()).fold(0.0, f64::max) + radius
            }
            Obstacle::Ellipse { .. } => {
                let samples = self.boundary_samples(CURVATURE_SAMPLES);
                let k = argmax(samples.iter().map(|p| p.norm()));
                refine_ellipse_extreme(self, &samples, k, |p| p.norm())
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Obstacle::Disc { radius, .. } => TAU * radius,
            Obstacle::Polygon { vertices } => polygon_perimeter(vertices),
            Obstacle::RoundedPolygon { vertices, radius } => polygon_perimeter(vertices) + TAU * radius,
            Obstacle::Ellipse { .. } => {
                let s = self.boundary_samples(20_000);
                closed_length(&s)
            }
        }
    }

    /// Minkowski sum with a ball of radius `r`.
    pub fn dilate(&self, r: f64) -> Result<Obstacle> {
        if !(r > 0.0) {
            return Err(NavError::InvalidParameter(format!("dilation radius {r} must be positive")));
        }
        Ok(match self {
            Obstacle::Disc { center, radius } => Obstacle::Disc { center: center.clone(), radius: radius + r },
            Obstacle::Polygon { vertices } => Obstacle::RoundedPolygon { vertices: vertices.clone(), radius: r },
            Obstacle::RoundedPolygon { vertices, radius } => {
                Obstacle::RoundedPolygon { vertices: vertices.clone(), radius: radius + r }
            }
            Obstacle::Ellipse { center, semi_axes, rotation } => Obstacle::Polygon {
                vertices: ellipse_offset_polygon(center, *semi_axes, *rotation, r, offset_segments(*semi_axes, r)),
            },
        })
    }

    /// Structural problems (bad radii, non-convex or clockwise polygons).
    pub fn shape_error(&self) -> Option<String> {
        match self {
            Obstacle::Disc { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || !center.is_finite() {
                    return Some(format!("disc radius {radius} must be positive and finite"));
                }
            }
            Obstacle::Ellipse { center, semi_axes, rotation } => {
                if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0) || !center.is_finite() || !rotation.is_finite() {
                    return Some("ellipse semi-axes must be positive".into());
                }
            }
            Obstacle::Polygon { vertices } | Obstacle::RoundedPolygon { vertices, .. } => {
                if let Obstacle::RoundedPolygon { radius, .. } = self {
                    if !(*radius > 0.0) {
                        return Some("rounded polygon radius must be positive".into());
                    }
                }
                if vertices.len() < 3 {
                    return Some("polygon needs at least three vertices".into());
                }
                if !vertices.iter().all(|v| v.dim() == 2 && v.is_finite()) {
                    return Some("polygon vertices must be finite planar points".into());
                }
                let n = vertices.len();
                for k in 0..n {
                    let a = &vertices[k];
                    let b = &vertices[(k + 1) % n];
                    let c = &vertices[(k + 2) % n];
                    if (b - a).cross2(&(c - b)) <= 0.0 {
                        return Some("polygon must be strictly convex and counter-clockwise".into());
                    }
                }
            }
        }
        None
    }
}

/// The navigation world: workspace ball plus obstacles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub dim: usize,
    pub workspace: Workspace,
    pub obstacles: Vec<Obstacle>,
}

impl World {
    pub fn new(dim: usize, r0: f64, obstacles: Vec<Obstacle>) -> Result<World> {
        if dim < 2 {
            return Err(NavError::InvalidParameter(format!("dimension {dim} must be at least 2")));
        }
        Ok(World { dim, workspace: Workspace::new(r0)?, obstacles })
    }

    pub fn r0(&self) -> f64 {
        self.workspace.r0
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn all_discs(&self) -> bool {
        self.obstacles.iter().all(Obstacle::is_disc)
    }

    /// Length tolerance scaled to the workspace.
    pub fn length_tol(&self) -> f64 {
        LENGTH_TOL * self.r0()
    }

    /// Signed distance to the free-space boundary (negative outside F).
    pub fn clearance(&self, x: &Point) -> f64 {
        self.obstacles.iter().map(|o| o.signed_distance(x)).fold(self.r0() - x.norm(), f64::min)
    }

    /// Error when `x` is outside the workspace or inside an obstacle (beyond tolerance).
    pub fn check_free(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim {
            return Err(NavError::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        let tol = self.length_tol();
        if x.norm() > self.r0() + tol {
            return Err(NavError::OutsideWorkspace);
        }
        for (id, o) in self.obstacles.iter().enumerate() {
            if o.signed_distance(x) < -tol {
                return Err(NavError::InsideObstacle { id });
            }
        }
        Ok(())
    }

    /// Ray parameter of the first free-space boundary hit (obstacle or workspace).
    /// Distance along `dir` to the first surface and its label: the obstacle
    /// index, or the obstacle count for the workspace boundary.
    pub fn ray_cast_labelled(&self, origin: &Point, dir: &Vector) -> (f64, usize) {
        let zero = Vector::zeros(origin.dim());
        let wall = ray_ball_exit(origin, dir, &zero, self.r0()).unwrap_or(0.0);
        self.obstacles
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.ray_hit(origin, dir).map(|t| (t, i)))
            .fold((wall, self.obstacles.len()), |best, hit| if hit.0 < best.0 { hit } else { best })
    }

    pub fn ray_cast(&self, origin: &Point, dir: &Vector) -> f64 {
        let zero = Vector::zeros(origin.dim());
        let wall = ray_ball_exit(origin, dir, &zero, self.r0()).unwrap_or(0.0);
        self.obstacles.iter().filter_map(|o| o.ray_hit(origin, dir)).fold(wall, f64::min)
    }
}

/// Kind of an assumption violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Overlap,
    BoundaryContact,
    Curvature,
    Dimension,
    Malformed,
    Destination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub obstacle_ids: Vec<usize>,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Minimum distance between two obstacles (negative when they overlap).
pub fn separation(a: &Obstacle, b: &Obstacle) -> f64 {
    match (a, b) {
        (Obstacle::Disc { center: ca, radius: ra }, Obstacle::Disc { center: cb, radius: rb }) => {
            ca.distance(cb) - ra - rb
        }
        _ => match (polygon_core(a), polygon_core(b)) {
            (Some((va, ra)), Some((vb, rb))) => polygon_polygon_distance(va, vb) - ra - rb,
            _ => {
                let sa = a.boundary_samples(CURVATURE_SAMPLES);
                let sb = b.boundary_samples(CURVATURE_SAMPLES);
                let ab = sb.iter().map(|q| a.signed_distance(q)).fold(f64::INFINITY, f64::min);
                let ba = sa.iter().map(|q| b.signed_distance(q)).fold(f64::INFINITY, f64::min);
                ab.min(ba)
            }
        },
    }
}

/// Checks dimensions, shapes, pairwise disjointness and workspace containment.
/// With a destination, also checks that it is free and that every non-disc
/// obstacle satisfies the curvature condition.
pub fn validate(world: &World, destination: Option<&Point>) -> ValidationReport {
    let mut violations = Vec::new();
    let margin = SEPARATION_MARGIN * world.r0();
    let mut well_formed = vec![true; world.len()];
    for (id, o) in world.obstacles.iter().enumerate() {
        let planar_only = !o.is_disc();
        if o.dim() != world.dim || (planar_only && world.dim != 2) {
            violations.push(Violation {
                kind: ViolationKind::Dimension,
                obstacle_ids: vec![id],
                magnitude: o.dim() as f64 - world.dim as f64,
            });
            well_formed[id] = false;
        } else if o.shape_error().is_some() {
            violations.push(Violation { kind: ViolationKind::Malformed, obstacle_ids: vec![id], magnitude: 0.0 });
            well_formed[id] = false;
        }
    }
    for i in 0..world.len() {
        if !well_formed[i] {
            continue;
        }
        let gap = world.r0() - world.obstacles[i].max_norm();
        if gap <= margin {
            violations.push(Violation { kind: ViolationKind::BoundaryContact, obstacle_ids: vec![i], magnitude: gap });
        }
        for j in i + 1..world.len() {
            if !well_formed[j] {
                continue;
            }
            let sep = separation(&world.obstacles[i], &world.obstacles[j]);
            if sep <= margin {
                violations.push(Violation { kind: ViolationKind::Overlap, obstacle_ids: vec![i, j], magnitude: sep });
            }
        }
    }
    if let Some(xd) = destination {
        if xd.dim() != world.dim {
            violations.push(Violation {
                kind: ViolationKind::Dimension,
                obstacle_ids: vec![],
                magnitude: xd.dim() as f64 - world.dim as f64,
            });
        } else {
            let clearance = world.clearance(xd);
            if clearance <= margin {
                violations.push(Violation {
                    kind: ViolationKind::Destination,
                    obstacle_ids: vec![],
                    magnitude: clearance,
                });
            } else {
                for (id, o) in world.obstacles.iter().enumerate() {
                    if well_formed[id] && !o.is_disc() && !matches!(check_curvature(o, xd), Ok(true)) {
                        violations.push(Violation {
                            kind: ViolationKind::Curvature,
                            obstacle_ids: vec![id],
                            magnitude: curvature_deficit(o, xd),
                        });
                    }
                }
            }
        }
    }
    ValidationReport { ok: violations.is_empty(), violations }
}

/// Far-side critical points of the distance to `x_d` along the boundary: the
/// sampled local extrema where the inward normal points towards `x_d`, with
/// their distances. The near-side closest point is excluded.
pub fn farthest_point_candidates(obstacle: &Obstacle, x_d: &Point) -> Vec<(Point, f64)> {
    let samples = obstacle.boundary_samples(CURVATURE_SAMPLES);
    let dist: Vec<f64> = samples.iter().map(|q| q.distance(x_d)).collect();
    let n = samples.len();
    let mut out = Vec::new();
    for k in 0..n {
        let (ip, inx) = ((k + n - 1) % n, (k + 1) % n);
        let (prev, next) = (dist[ip], dist[inx]);
        // strict on one side so plateaus report a single point
        let is_max = dist[k] > prev && dist[k] >= next;
        let is_min = dist[k] < prev && dist[k] <= next;
        if !(is_max || is_min) {
            continue;
        }
        // counter-clockwise samples: the outward normal is the chord turned clockwise
        let chord = &samples[inx] - &samples[ip];
        let outward = Vector::new2(chord.y(), -chord.x());
        if outward.dot(&(&samples[k] - x_d)) > 0.0 {
            out.push((samples[k].clone(), dist[k]));
        }
    }
    out
}

/// Curvature condition: the obstacle lies in the ball about `x_d` through
/// every far-side critical point. Discs always pass.
pub fn check_curvature(obstacle: &Obstacle, x_d: &Point) -> Result<bool> {
    if obstacle.signed_distance(x_d) <= 0.0 {
        return Err(NavError::InvalidParameter("destination lies inside the obstacle".into()));
    }
    Ok(curvature_deficit(obstacle, x_d) <= 0.0)
}

/// How far the obstacle sticks out of the smallest candidate ball (≤ 0 when
/// the curvature condition holds).
fn curvature_deficit(obstacle: &Obstacle, x_d: &Point) -> f64 {
    let cands = farthest_point_candidates(obstacle, x_d);
    if cands.is_empty() {
        return 0.0;
    }
    let samples = obstacle.boundary_samples(CURVATURE_SAMPLES);
    let reach = samples.iter().map(|q| q.distance(x_d)).fold(0.0, f64::max);
    let smallest = cands.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    // sampling jitter around a single true maximum stays below this
    let tol = 1e-6 * reach.max(1.0);
    reach - smallest - tol
}

/// Parameters for random world generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWorldSpec {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub r0: f64,
    pub min_separation: f64,
    pub radius_range: (f64, f64),
    /// Points every obstacle must stay `min_separation` away from.
    #[serde(default)]
    pub keep_clear: Vec<Point>,
}

/// Uniform sample in the origin-centred ball of radius `radius`.
pub fn sample_ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Point {
    loop {
        let g = Vector::from((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
        if let Some(dir) = g.normalized() {
            let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
            return dir.scale(r);
        }
    }
}

/// Rejection-sampled disc world. Deterministic in `spec.seed`; the result
/// always passes `validate`.
pub fn random_world(spec: &RandomWorldSpec) -> Result<World> {
    let (rmin, rmax) = spec.radius_range;
    if spec.n < 2 || !(rmin > 0.0 && rmax >= rmin) || !(spec.min_separation >= 0.0) {
        return Err(NavError::InvalidParameter("invalid random world parameters".into()));
    }
    let margin = spec.min_separation.max(2.0 * SEPARATION_MARGIN * spec.r0);
    if rmax + margin >= spec.r0 {
        return Err(NavError::InvalidParameter("radius range does not fit the workspace".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(spec.m);
    for index in 0..spec.m {
        let mut placed = false;
        for _ in 0..MAX_REJECTIONS {
            let r = if rmax > rmin { rng.random_range(rmin..=rmax) } else { rmin };
            let c = sample_ball(&mut rng, spec.n, spec.r0 - r - margin);
            let clear_of_obstacles = obstacles.iter().all(|o| {
                let (oc, or) = o.as_disc().expect("disc world");
                c.distance(oc) - r - or >= margin
            });
            let clear_of_points = spec.keep_clear.iter().all(|p| c.distance(p) - r >= margin);
            if clear_of_obstacles && clear_of_points {
                obstacles.push(Obstacle::Disc { center: c, radius: r });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(NavError::InfeasiblePacking { index, attempts: MAX_REJECTIONS });
        }
    }
    World::new(spec.n, spec.r0, obstacles)
}

/// Planar world of ellipses and rounded polygons, each inscribed in a disc of
/// a random disc world and resampled until it satisfies the curvature
/// condition with respect to `x_d`.
pub fn random_convex_world(spec: &RandomWorldSpec, x_d: &Point) -> Result<World> {
    if spec.n != 2 {
        return Err(NavError::Unsupported("convex worlds are planar".into()));
    }
    let mut spec = spec.clone();
    if !spec.keep_clear.contains(x_d) {
        spec.keep_clear.push(x_d.clone());
    }
    let discs = random_world(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut obstacles = Vec::with_capacity(discs.len());
    for (index, o) in discs.obstacles.iter().enumerate() {
        let (c, r) = o.as_disc().expect("disc world");
        let mut chosen = None;
        for _ in 0..100 {
            let candidate = if rng.random_bool(0.5) {
                let ratio = rng.random_range(0.5..1.0);
                Obstacle::Ellipse { center: c.clone(), semi_axes: [r, r * ratio], rotation: rng.random_range(0.0..PI) }
            } else {
                let k = rng.random_range(3..=7usize);
                let rounding = r * rng.random_range(0.1..0.3);
                let core = r - rounding;
                let base = rng.random_range(0.0..TAU);
                let step = TAU / k as f64;
                let vertices = (0..k)
                    .map(|j| {
                        let a = base + step * j as f64 + rng.random_range(-0.25..0.25) * step;
                        c + &Vector::polar(a).scale(core)
                    })
                    .collect();
                Obstacle::RoundedPolygon { vertices, radius: rounding }
            };
            if candidate.shape_error().is_none() && matches!(check_curvature(&candidate, x_d), Ok(true)) {
                chosen = Some(candidate);
                break;
            }
        }
        match chosen {
            Some(ob) => obstacles.push(ob),
            None => {
                return Err(NavError::InfeasiblePacking { index, attempts: 100 });
            }
        }
    }
    World::new(2, spec.r0, obstacles)
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) }).0
}

/// Golden-section refinement of an extremum of `f` over the ellipse parameter
/// between the neighbours of sample `k`.
fn refine_ellipse_extreme(o: &Obstacle, samples: &[Point], k: usize, f: impl Fn(&Point) -> f64) -> f64 {
    let Obstacle::Ellipse { center, semi_axes, rotation } = o else {
        return f(&samples[k]);
    };
    let n = samples.len() as f64;
    let at = |t: f64| f(&from_local(semi_axes[0] * t.cos(), semi_axes[1] * t.sin(), center, *rotation));
    let (mut lo, mut hi) = (TAU * (k as f64 - 1.0) / n, TAU * (k as f64 + 1.0) / n);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if at(m1) > at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    at(0.5 * (lo + hi)).max(f(&samples[k]))
}

fn to_local(q: &Point, center: &Point, rotation: f64) -> (f64, f64) {
    rotate_back(q[0] - center[0], q[1] - center[1], rotation)
}

fn rotate_back(x: f64, y: f64, rotation: f64) -> (f64, f64) {
    let (s, c) = rotation.sin_cos();
    (c * x + s * y, -s * x + c * y)
}

fn from_local(x: f64, y: f64, center: &Point, rotation: f64) -> Point {
    let (s, c) = rotation.sin_cos();
    Vector::new2(center[0] + c * x - s * y, center[1] + s * x + c * y)
}

/// Closest point on the ellipse `(x/a)² + (y/b)² = 1` to `(px, py)`, by the
/// bisection method on the Lagrange multiplier.
fn ellipse_closest_point(a: f64, b: f64, px: f64, py: f64) -> (f64, f64) {
    // work in the first quadrant with e0 ≥ e1
    let swap = a < b;
    let (e0, e1, y0, y1) = if swap { (b, a, py.abs(), px.abs()) } else { (a, b, px.abs(), py.abs()) };
    let (x0, x1) = if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = ellipse_root(r0, z0, z1, g);
                (r0 * y0 / (sbar + r0), y1 / (sbar + 1.0))
            } else {
                (y0, y1)
            }
        } else {
            (0.0, e1)
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            (e0 * xde0, e1 * (1.0 - xde0 * xde0).max(0.0).sqrt())
        } else {
            (e0, 0.0)
        }
    };
    let (x0, x1) = (x0.copysign(if swap { py } else { px }), x1.copysign(if swap { px } else { py }));
    if swap {
        (x1, x0)
    } else {
        (x0, x1)
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

fn ellipse_signed_distance(a: f64, b: f64, px: f64, py: f64) -> f64 {
    let (cx, cy) = ellipse_closest_point(a, b, px, py);
    let d = (px - cx).hypot(py - cy);
    if (px / a).powi(2) + (py / b).powi(2) < 1.0 {
        -d
    } else {
        d
    }
}

/// Vertex count keeping the circumscribed offset polygon within `1e-4·r` of
/// the exact offset curve; never fewer than `ELLIPSE_OFFSET_SEGMENTS`.
fn offset_segments(semi_axes: [f64; 2], r: f64) -> usize {
    let (a, b) = (semi_axes[0].max(semi_axes[1]), semi_axes[0].min(semi_axes[1]));
    let max_radius_of_curvature = a * a / b + r;
    // overshoot of a tangent-line vertex is about rho·(pi/k)²/2
    let needed = PI * (max_radius_of_curvature / (2e-4 * r)).sqrt();
    (needed.ceil() as usize).max(ELLIPSE_OFFSET_SEGMENTS)
}

/// Circumscribed polygon of the ellipse's offset curve at distance `r`, built
/// from tangent lines at equally spaced outward normals. The polygon contains
/// the exact offset region.
fn ellipse_offset_polygon(center: &Point, semi_axes: [f64; 2], rotation: f64, r: f64, k: usize) -> Vec<Point> {
    let (a, b) = (semi_axes[0], semi_axes[1]);
    let support = |phi: f64| {
        // support function of the rotated ellipse in direction phi, plus r
        let (nx, ny) = rotate_back(phi.cos(), phi.sin(), rotation);
        (a * nx).hypot(b * ny) + r
    };
    (0..k)
        .map(|j| {
            let p0 = TAU * (j as f64 - 0.5) / k as f64;
            let p1 = TAU * (j as f64 + 0.5) / k as f64;
            let (h0, h1) = (support(p0), support(p1));
            // solve n0·v = h0, n1·v = h1
            let (n0x, n0y) = (p0.cos(), p0.sin());
            let (n1x, n1y) = (p1.cos(), p1.sin());
            let det = n0x * n1y - n0y * n1x;
            let vx = (h0 * n1y - h1 * n0y) / det;
            let vy = (n0x * h1 - n1x * h0) / det;
            Vector::new2(center[0] + vx, center[1] + vy)
        })
        .collect()
}

fn polygon_core(o: &Obstacle) -> Option<(&[Point], f64)> {
    match o {
        Obstacle::Polygon { vertices } => Some((vertices, 0.0)),
        Obstacle::RoundedPolygon { vertices, radius } => Some((vertices, *radius)),
        _ => None,
    }
}

pub(crate) fn centroid(vertices: &[Point]) -> Point {
    let n = vertices.len();
    let mut area = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for k in 0..n {
        let p = &vertices[k];
        let q = &vertices[(k + 1) % n];
        let w = p.cross2(q);
        area += w;
        cx += (p.x() + q.x()) * w;
        cy += (p.y() + q.y()) * w;
    }
    if area.abs() < 1e-300 {
        let s = vertices.iter().fold(Vector::zeros(2), |acc, v| acc + v);
        return s.scale(1.0 / n as f64);
    }
    Vector::new2(cx / (3.0 * area), cy / (3.0 * area))
}

fn polygon_perimeter(v: &[Point]) -> f64 {
    closed_length(v)
}

fn closed_length(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n).map(|k| v[k].distance(&v[(k + 1) % n])).sum()
}

/// Closed containment for a counter-clockwise convex polygon.
pub(crate) fn polygon_contains(v: &[Point], q: &Point) -> bool {
    let n = v.len();
    (0..n).all(|k| (&v[(k + 1) % n] - &v[k]).cross2(&(q - &v[k])) >= 0.0)
}

fn polygon_boundary_distance(v: &[Point], q: &Point) -> f64 {
    let n = v.len();
    (0..n).map(|k| point_segment_distance(q, &v[k], &v[(k + 1) % n])).fold(f64::INFINITY, f64::min)
}

fn polygon_signed_distance(v: &[Point], q: &Point) -> f64 {
    let d = polygon_boundary_distance(v, q);
    if polygon_contains(v, q) {
        -d
    } else {
        d
    }
}

fn polygon_closest_boundary_point(v: &[Point], q: &Point) -> Point {
    let n = v.len();
    let mut best = (f64::INFINITY, v[0].clone());
    for k in 0..n {
        let a = &v[k];
        let b = &v[(k + 1) % n];
        let ab = b - a;
        let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let p = a.axpy(t, &ab);
        let d = p.distance(q);
        if d < best.0 {
            best = (d, p);
        }
    }
    best.1
}

/// Distance between a segment and a convex polygon (0 when they meet).
fn segment_polygon_distance(v: &[Point], a: &Point, b: &Point) -> f64 {
    if polygon_contains(v, a) || polygon_contains(v, b) {
        return 0.0;
    }
    let n = v.len();
    let mut best = f64::INFINITY;
    for k in 0..n {
        let p = &v[k];
        let q = &v[(k + 1) % n];
        if crate::geometry::segment_intersection2(a, b, p, q).is_some() {
            return 0.0;
        }
        best = best
            .min(point_segment_distance(p, a, b))
            .min(point_segment_distance(a, p, q))
            .min(point_segment_distance(b, p, q));
    }
    best
}

fn polygon_polygon_distance(va: &[Point], vb: &[Point]) -> f64 {
    let inside = vb.iter().map(|p| polygon_signed_distance(va, p)).fold(f64::INFINITY, f64::min);
    let inside2 = va.iter().map(|p| polygon_signed_distance(vb, p)).fold(f64::INFINITY, f64::min);
    let crossing = (0..va.len()).any(|i| {
        let a0 = &va[i];
        let a1 = &va[(i + 1) % va.len()];
        (0..vb.len()).any(|j| crate::geometry::segment_intersection2(a0, a1, &vb[j], &vb[(j + 1) % vb.len()]).is_some())
    });
    let d = inside.min(inside2);
    if crossing && d > 0.0 {
        0.0
    } else {
        d
    }
}

/// Entry parameter of a ray into a convex polygon (Cyrus–Beck clipping).
fn polygon_ray_entry(v: &[Point], origin: &Point, dir: &Vector) -> Option<f64> {
    let n = v.len();
    let (mut t_in, mut t_out) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..n {
        let a = &v[k];
        let edge = &v[(k + 1) % n] - a;
        // outward normal of a counter-clockwise edge
        let normal = Vector::new2(edge.y(), -edge.x());
        let num = normal.dot(&(origin - a));
        let den = normal.dot(dir);
        if den.abs() < 1e-300 {
            if num > 0.0 {
                return None;
            }
            continue;
        }
        let t = -num / den;
        if den < 0.0 {
            t_in = t_in.max(t);
        } else {
            t_out = t_out.min(t);
        }
        if t_in > t_out {
            return None;
        }
    }
    if t_in >= 0.0 {
        Some(t_in)
    } else if t_out > 0.0 {
        Some(0.0)
    } else {
        None
    }
}

fn rounded_polygon_ray_entry(v: &[Point], r: f64, origin: &Point, dir: &Vector) -> Option<f64> {
    let n = v.len();
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t >= 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    for k in 0..n {
        if let Some(t) = ray_ball_entry(origin, dir, &v[k], r) {
            take(t);
        }
        let a = &v[k];
        let b = &v[(k + 1) % n];
        let e = b - a;
        let normal = Vector::new2(e.y(), -e.x()).normalized()?;
        let a_off = a.axpy(r, &normal);
        let b_off = b.axpy(r, &normal);
        let far = origin.axpy(4.0 * (origin.distance(a) + e.norm() + r), dir);
        if let Some((t, _)) = crate::geometry::segment_intersection2(origin, &far, &a_off, &b_off) {
            take(t * origin.distance(&far));
        }
    }
    best
}

fn sample_polyline(v: &[Point], count: usize) -> Vec<Point> {
    let n = v.len();
    let total = closed_length(v);
    let mut out = Vec::with_capacity(count + n);
    for k in 0..n {
        let a = &v[k];
        let b = &v[(k + 1) % n];
        let len = a.distance(b);
        let steps = ((len / total) * count as f64).ceil().max(1.0) as usize;
        for s in 0..steps {
            out.push(a.axpy(s as f64 / steps as f64, &(b - a)));
        }
    }
    out
}

fn sample_rounded_polygon(v: &[Point], r: f64, count: usize) -> Vec<Point> {
    let n = v.len();
    let total = closed_length(v) + TAU * r;
    let mut out = Vec::with_capacity(count + 2 * n);
    for k in 0..n {
        let prev = &v[(k + n - 1) % n];
        let cur = &v[k];
        let next = &v[(k + 1) % n];
        let e_in = cur - prev;
        let e_out = next - cur;
        let a0 = Vector::new2(e_in.y(), -e_in.x()).heading();
        let mut a1 = Vector::new2(e_out.y(), -e_out.x()).heading();
        while a1 < a0 {
            a1 += TAU;
        }
        let arc_steps = (((a1 - a0) * r / total) * count as f64).ceil().max(1.0) as usize;
        for s in 0..arc_steps {
            let a = a0 + (a1 - a0) * s as f64 / arc_steps as f64;
            out.push(cur + &Vector::polar(a).scale(r));
        }
        let normal = Vector::polar(a1);
        let p = cur.axpy(r, &normal);
        let q = next.axpy(r, &normal);
        let len = e_out.norm();
        let steps = ((len / total) * count as f64).ceil().max(1.0) as usize;
        for s in 0..steps {
            out.push(p.axpy(s as f64 / steps as f64, &(&q - &p)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v2(x: f64, y: f64) -> Point {
        Vector::new2(x, y)
    }

    fn unit_square() -> Obstacle {
        Obstacle::polygon(vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)])
    }

    #[test]
    fn validate_separated_discs() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([0.0, 0.0], 1.0), Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        assert!(validate(&w, None).ok);
    }

    #[test]
    fn validate_reports_overlap_magnitude() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([0.0, 0.0], 1.0), Obstacle::disc([1.5, 0.0], 1.0)]).unwrap();
        let rep = validate(&w, None);
        assert!(!rep.ok);
        assert_eq!(rep.violations.len(), 1);
        let v = &rep.violations[0];
        assert_eq!(v.kind, ViolationKind::Overlap);
        assert_eq!(v.obstacle_ids, vec![0, 1]);
        assert_abs_diff_eq!(v.magnitude, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn validate_reports_boundary_contact() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([9.5, 0.0], 1.0)]).unwrap();
        let rep = validate(&w, None);
        assert_eq!(rep.violations[0].kind, ViolationKind::BoundaryContact);
        assert_abs_diff_eq!(rep.violations[0].magnitude, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn validate_flags_dimension_and_shape() {
        let w = World::new(3, 10.0, vec![Obstacle::disc([0.0, 0.0], 1.0)]).unwrap();
        assert_eq!(validate(&w, None).violations[0].kind, ViolationKind::Dimension);
        let cw = Obstacle::polygon(vec![v2(0.0, 0.0), v2(0.0, 1.0), v2(1.0, 1.0), v2(1.0, 0.0)]);
        let w = World::new(2, 10.0, vec![cw]).unwrap();
        assert_eq!(validate(&w, None).violations[0].kind, ViolationKind::Malformed);
    }

    #[test]
    fn validate_checks_destination() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([0.0, 0.0], 1.0)]).unwrap();
        assert!(validate(&w, Some(&v2(5.0, 0.0))).ok);
        let rep = validate(&w, Some(&v2(0.5, 0.0)));
        assert_eq!(rep.violations[0].kind, ViolationKind::Destination);
    }

    #[test]
    fn curvature_disc_always_true() {
        let d = Obstacle::disc([2.0, 1.0], 1.5);
        for xd in [v2(-5.0, 0.0), v2(4.0, 1.0), v2(2.0, 2.6)] {
            assert!(check_curvature(&d, &xd).unwrap());
        }
    }

    #[test]
    fn curvature_flat_ellipse_near_fails() {
        let e = Obstacle::ellipse([0.0, 0.0], [5.0, 0.2], 0.0);
        assert!(!check_curvature(&e, &v2(0.0, 0.7)).unwrap());
        // brute-force oracle: the near-side antipode is a distance local maximum,
        // yet some boundary point lies outside its ball
        let xd = v2(0.0, 0.7);
        let anti = v2(0.0, -0.2);
        let radius = anti.distance(&xd);
        let outside = (0..10_000)
            .map(|k| {
                let t = TAU * k as f64 / 10_000.0;
                v2(5.0 * t.cos(), 0.2 * t.sin())
            })
            .any(|q| q.distance(&xd) > radius + 1e-9);
        assert!(outside);
    }

    #[test]
    fn curvature_round_ellipse_far_passes() {
        let e = Obstacle::ellipse([0.0, 0.0], [1.2, 1.0], 0.3);
        assert!(check_curvature(&e, &v2(50.0, 0.0)).unwrap());
        assert!(check_curvature(&e, &v2(-30.0, 40.0)).unwrap());
    }

    #[test]
    fn curvature_rejects_interior_destination() {
        let e = Obstacle::ellipse([0.0, 0.0], [1.2, 1.0], 0.0);
        assert!(check_curvature(&e, &v2(0.1, 0.0)).is_err());
    }

    #[test]
    fn dilation_examples() {
        let d = Obstacle::disc([1.0, 1.0], 1.0).dilate(0.25).unwrap();
        assert_eq!(d.as_disc().unwrap().1, 1.25);
        let sq = unit_square().dilate(0.2).unwrap();
        assert_abs_diff_eq!(sq.perimeter(), 4.0 + TAU * 0.2, epsilon = 1e-12);
        let ws = Workspace::new(10.0).unwrap().erode(0.25).unwrap();
        assert_eq!(ws.r0, 9.75);
        assert!(Workspace::new(10.0).unwrap().erode(10.0).is_err());
        assert!(unit_square().dilate(0.0).is_err());
    }

    #[test]
    fn rounded_square_distance_is_exact() {
        let sq = unit_square().dilate(0.2).unwrap();
        assert_abs_diff_eq!(sq.signed_distance(&v2(2.0, 0.5)), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sq.signed_distance(&v2(2.0, 2.0)), 2f64.sqrt() - 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(sq.signed_distance(&v2(0.5, 0.5)), -0.7, epsilon = 1e-12);
    }

    #[test]
    fn dilated_ellipse_bounds_offset_curve() {
        let e = Obstacle::ellipse([1.0, -1.0], [2.0, 0.5], 0.4);
        let r = 0.25;
        let p = e.dilate(r).unwrap();
        assert!(p.shape_error().is_none());
        // every polygon vertex is at distance ≥ r from the ellipse and within tolerance of it
        for q in p.boundary_samples(2000) {
            let d = e.signed_distance(&q);
            assert!(d >= r - 1e-9, "{d}");
            assert!(d <= r + 1e-4 * r, "{d}");
        }
        // the polygon contains the exact offset curve
        for q in e.boundary_samples(2000) {
            assert!(p.signed_distance(&q) <= -r + 1e-9);
        }
    }

    #[test]
    fn ellipse_distance_matches_sampling() {
        let e = Obstacle::ellipse([0.5, 0.2], [3.0, 1.0], 0.7);
        let samples = e.boundary_samples(200_000);
        for q in [v2(4.0, 3.0), v2(-3.0, 0.0), v2(0.5, 0.2), v2(1.0, 0.5), v2(0.0, -5.0)] {
            let brute = samples.iter().map(|s| s.distance(&q)).fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(e.signed_distance(&q).abs(), brute, epsilon = 1e-4);
        }
        assert!(e.signed_distance(&v2(0.5, 0.2)) < 0.0);
    }

    #[test]
    fn obstacle_ray_hits() {
        let o = v2(0.0, 0.0);
        let dir = v2(1.0, 0.0);
        assert_abs_diff_eq!(Obstacle::disc([3.0, 0.0], 1.0).ray_hit(&o, &dir).unwrap(), 2.0);
        assert_abs_diff_eq!(
            Obstacle::ellipse([5.0, 0.0], [2.0, 1.0], 0.0).ray_hit(&o, &dir).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        let sq = Obstacle::polygon(vec![v2(2.0, -1.0), v2(4.0, -1.0), v2(4.0, 1.0), v2(2.0, 1.0)]);
        assert_abs_diff_eq!(sq.ray_hit(&o, &dir).unwrap(), 2.0);
        assert_abs_diff_eq!(sq.dilate(0.5).unwrap().ray_hit(&o, &dir).unwrap(), 1.5, epsilon = 1e-12);
        assert!(sq.ray_hit(&o, &v2(0.0, 1.0)).is_none());
        assert!(sq.ray_hit(&o, &v2(-1.0, 0.0)).is_none());
        // rounded corner
        let corner_dir = v2(1.0, 1.0).normalized().unwrap();
        let rs = Obstacle::polygon(vec![v2(2.0, 2.0), v2(3.0, 2.0), v2(3.0, 3.0), v2(2.0, 3.0)]).dilate(0.5).unwrap();
        assert_abs_diff_eq!(rs.ray_hit(&o, &corner_dir).unwrap(), 8f64.sqrt() - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn segment_intersection_by_shape() {
        let e = Obstacle::ellipse([0.0, 0.0], [2.0, 1.0], 0.0);
        assert!(e.segment_intersects(&v2(-3.0, 0.0), &v2(3.0, 0.0)));
        assert!(e.segment_intersects(&v2(-3.0, 1.0), &v2(3.0, 1.0)));
        assert!(!e.segment_intersects(&v2(-3.0, 1.01), &v2(3.0, 1.01)));
        let sq = unit_square();
        assert!(sq.segment_intersects(&v2(-1.0, 0.5), &v2(2.0, 0.5)));
        assert!(!sq.segment_intersects(&v2(-1.0, 1.5), &v2(2.0, 1.5)));
        assert!(sq.dilate(0.6).unwrap().segment_intersects(&v2(-1.0, 1.5), &v2(2.0, 1.5)));
    }

    #[test]
    fn random_world_examples() {
        let base = RandomWorldSpec {
            seed: 1,
            m: 0,
            n: 2,
            r0: 10.0,
            min_separation: 0.5,
            radius_range: (0.5, 1.5),
            keep_clear: vec![],
        };
        let w = random_world(&base).unwrap();
        assert!(w.is_empty() && validate(&w, None).ok);
        let spec = RandomWorldSpec { m: 5, ..base.clone() };
        let w = random_world(&spec).unwrap();
        assert_eq!(w.len(), 5);
        assert!(validate(&w, None).ok);
        assert_eq!(w, random_world(&spec).unwrap());
    }

    #[test]
    fn random_world_reports_infeasible_index() {
        let spec = RandomWorldSpec {
            seed: 3,
            m: 50,
            n: 2,
            r0: 3.0,
            min_separation: 0.5,
            radius_range: (1.0, 1.0),
            keep_clear: vec![],
        };
        match random_world(&spec) {
            Err(NavError::InfeasiblePacking { index, attempts }) => {
                assert!(index > 0 && index < 50);
                assert_eq!(attempts, MAX_REJECTIONS);
            }
            other => panic!("expected packing failure, got {other:?}"),
        }
    }

    #[test]
    fn random_convex_world_is_valid() {
        let xd = v2(0.0, 0.0);
        let spec = RandomWorldSpec {
            seed: 7,
            m: 8,
            n: 2,
            r0: 10.0,
            min_separation: 0.6,
            radius_range: (0.6, 1.4),
            keep_clear: vec![],
        };
        let w = random_convex_world(&spec, &xd).unwrap();
        let rep = validate(&w, Some(&xd));
        assert!(rep.ok, "{:?}", rep.violations);
    }

    #[test]
    fn json_round_trip() {
        let w = World::new(
            2,
            10.0,
            vec![
                Obstacle::disc([0.1, 0.2], 1.0),
                Obstacle::ellipse([4.0, 0.0], [1.0, 0.5], 0.3),
                unit_square().dilate(0.1).unwrap(),
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&w).unwrap();
        let back: World = serde_json::from_str(&s).unwrap();
        assert_eq!(w, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_worlds_always_validate(seed in 0u64..10_000, m in 0usize..12, n in 2usize..4) {
            let spec = RandomWorldSpec {
                seed, m, n, r0: 10.0, min_separation: 0.4, radius_range: (0.3, 1.2), keep_clear: vec![],
            };
            if let Ok(w) = random_world(&spec) {
                prop_assert!(validate(&w, None).ok);
            }
        }

        #[test]
        fn dilation_preserves_assumptions(seed in 0u64..10_000, m in 1usize..10) {
            let r = 0.2;
            let spec = RandomWorldSpec {
                seed, m, n: 2, r0: 10.0, min_separation: 2.0 * r + 0.05, radius_range: (0.3, 1.0), keep_clear: vec![],
            };
            let w = random_world(&spec).unwrap();
            let dilated = World {
                dim: 2,
                workspace: w.workspace.erode(r).unwrap(),
                obstacles: w.obstacles.iter().map(|o| o.dilate(r).unwrap()).collect(),
            };
            prop_assert!(validate(&dilated, None).ok);
        }

        #[test]
        fn curvature_holds_for_every_disc(cx in -5.0f64..5.0, cy in -5.0f64..5.0, r in 0.1f64..3.0, a in 0.0f64..TAU, d in 0.01f64..20.0) {
            let disc = Obstacle::disc([cx, cy], r);
            let xd = v2(cx, cy) + Vector::polar(a).scale(r + d);
            prop_assert!(check_curvature(&disc, &xd).unwrap());
        }
    }
}
