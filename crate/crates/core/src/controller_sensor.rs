//! Sensor-based reactive controller for planar worlds.
//!
//! A 360° range scan is split into arcs, each arc is extended by one free ray
//! on either side, and the arc crossed by the segment to the destination
//! defines a virtual enclosing cone. The nominal command is projected onto that
//! cone with the same closed form as the map-based law.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller_map::{nominal, Mode};
use crate::error::{NavError, Result};
use crate::geometry::{ray_ball_exit, signed_angle2, unit_angle, wrap_angle, Point, Vector};
use crate::world::World;

/// Floor on the virtual aperture for single-sample arcs.
pub const MIN_VIRTUAL_APERTURE: f64 = 1e-3;
/// Consecutive returns farther apart than this many chords start a new arc.
pub const GAP_CHORDS: f64 = 4.0;
/// Width, in noise standard deviations, of the range band used to locate the
/// nearest point in noisy scans.
pub const NOISE_BAND: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    /// Angular step in degrees; must divide 360.
    pub resolution_deg: f64,
    /// Maximum range.
    pub range: f64,
    /// Standard deviation of the additive range noise on returns.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Returns shorter than this are reported at this range.
    #[serde(default)]
    pub min_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec { resolution_deg: 1.0, range: 3.4, noise_sigma: 0.0, min_range: 0.0 }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        let beams = 360.0 / self.resolution_deg;
        if !(self.resolution_deg > 0.0 && self.resolution_deg <= 360.0) || (beams - beams.round()).abs() > 1e-9 {
            return Err(NavError::InvalidParameter(format!(
                "resolution {} deg must be positive and divide 360",
                self.resolution_deg
            )));
        }
        if !(self.range > 0.0) || !(self.noise_sigma >= 0.0) || !(self.min_range >= 0.0) || self.min_range >= self.range
        {
            return Err(NavError::InvalidParameter("lidar needs range > min_range ≥ 0 and noise ≥ 0".into()));
        }
        Ok(())
    }

    pub fn beams(&self) -> usize {
        (360.0 / self.resolution_deg).round() as usize
    }

    pub fn step(&self) -> f64 {
        self.resolution_deg.to_radians()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub origin: Point,
    pub resolution_deg: f64,
    pub range: f64,
    /// Noise level the scan was taken with.
    #[serde(default)]
    pub noise_sigma: f64,
    /// `ranges[k]` is the measurement along bearing `k · resolution`.
    pub ranges: Vec<f64>,
    /// Surface hit by each beam when the sensor reports it: an obstacle index,
    /// or the obstacle count for the workspace boundary. Without labels, arcs
    /// are separated by range discontinuities alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.resolution_deg.to_radians()
    }

    pub fn bearing(&self, k: usize) -> f64 {
        (k % self.len()) as f64 * self.step()
    }

    pub fn direction(&self, k: usize) -> Vector {
        Vector::polar(self.bearing(k))
    }

    /// Cartesian point of sample `k` (indices wrap).
    pub fn point(&self, k: usize) -> Point {
        let k = k % self.len();
        self.origin.axpy(self.ranges[k], &self.direction(k))
    }

    pub fn is_return(&self, k: usize) -> bool {
        self.ranges[k % self.len()] < self.range * (1.0 - 1e-9)
    }
}

/// Range scan of the world from `x`. Noise is added to returns only, then
/// clamped into `[min_range, range]`.
pub fn scan<R: Rng + ?Sized>(x: &Point, world: &World, spec: &LidarSpec, rng: &mut R) -> Result<LidarScan> {
    spec.validate()?;
    if world.dim != 2 || x.dim() != 2 {
        return Err(NavError::Unsupported("range scans are planar".into()));
    }
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| NavError::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let step = spec.step();
    let n = spec.beams();
    let dirs: Vec<Vector> = (0..n).map(|k| Vector::polar(k as f64 * step)).collect();
    let (mut ranges, mut labels) = (Vec::with_capacity(n), vec![world.len(); n]);
    let zero = Vector::zeros(2);
    for d in &dirs {
        ranges.push(ray_ball_exit(x, d, &zero, world.r0()).unwrap_or(0.0));
    }
    // each obstacle only affects the beams through its bounding ball
    for (i, o) in world.obstacles.iter().enumerate() {
        let (bc, br) = o.bounding_ball();
        let dist = bc.distance(x);
        if dist - br > spec.range {
            continue;
        }
        let beams: Box<dyn Iterator<Item = usize>> = if dist <= br {
            Box::new(0..n)
        } else {
            let mid = (&bc - x).heading();
            let half = (br / dist).asin() + 1e-9;
            let lo = ((mid - half) / step).ceil() as i64;
            let hi = ((mid + half) / step).floor() as i64;
            Box::new((lo..=hi).map(move |k| k.rem_euclid(n as i64) as usize))
        };
        for k in beams {
            if let Some(t) = o.ray_hit(x, &dirs[k]) {
                if t < ranges[k] {
                    ranges[k] = t;
                    labels[k] = i;
                }
            }
        }
    }
    if let Some(noise) = &noise {
        for rho in ranges.iter_mut() {
            if *rho < spec.range {
                *rho += noise.sample(rng);
            }
        }
    }
    for rho in ranges.iter_mut() {
        *rho = rho.clamp(spec.min_range, spec.range);
    }
    Ok(LidarScan {
        origin: x.clone(),
        resolution_deg: spec.resolution_deg,
        range: spec.range,
        noise_sigma: spec.noise_sigma,
        ranges,
        labels: Some(labels),
    })
}

/// Circular index range `start, start+1, …, start+len−1` (mod scan length).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcRange {
    pub start: usize,
    pub len: usize,
}

impl ArcRange {
    /// Last index, not reduced modulo the scan length.
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.start..self.start + self.len
    }

    pub fn contains(&self, k: usize, n: usize) -> bool {
        (k + n - self.start % n) % n < self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArcList {
    pub arcs: Vec<ArcRange>,
    pub extended: Vec<ArcRange>,
}

fn is_jump(scan: &LidarScan, k: usize) -> bool {
    let (a, b) = (scan.point(k), scan.point(k + 1));
    let far = scan.ranges[k % scan.len()].max(scan.ranges[(k + 1) % scan.len()]);
    let chord = 2.0 * far * (0.5 * scan.step()).sin();
    a.distance(&b) > GAP_CHORDS * chord
}

/// Tolerance on range monotonicity: three noise deviations plus round-off.
fn monotone_tol(scan: &LidarScan) -> f64 {
    3.0 * scan.noise_sigma + 1e-9 * scan.range
}

/// A jump between `k` and `k + 1` is a grazing ray on a single convex
/// obstacle when the range keeps growing on the far side of the jump until
/// the run ends, either at a free ray or at a further jump away from the
/// sensor (a silhouette). Seen from outside, ranges on a convex obstacle first
/// decrease and then increase, so a far side that turns back down belongs to
/// another obstacle.
fn is_grazing(scan: &LidarScan, k: usize) -> bool {
    let n = scan.len();
    let tol = monotone_tol(scan);
    let rho = |j: usize| scan.ranges[j % n];
    // walk away from the jump along the far side
    let forward = rho(k + 1) > rho(k);
    let mut j = if forward { k + 1 } else { k + n };
    for _ in 0..n {
        let next = if forward { j + 1 } else { j - 1 };
        if !scan.is_return(next) {
            return true;
        }
        if rho(next) < rho(j) - tol {
            return false;
        }
        let pair = if forward { j } else { next };
        if is_jump(scan, pair) {
            return true;
        }
        j = next;
    }
    false
}

/// Maximal runs of returns from one surface. Labelled scans split where the
/// label changes; unlabelled scans split at range discontinuities that are
/// not grazing rays.
pub fn extract_arcs(scan: &LidarScan) -> Vec<ArcRange> {
    let n = scan.len();
    if n == 0 {
        return Vec::new();
    }
    let labels = scan.labels.as_ref().filter(|l| l.len() == n);
    // a break after index k separates k and k+1
    let breaks: Vec<bool> = (0..n)
        .map(|k| {
            !scan.is_return(k)
                || !scan.is_return(k + 1)
                || match labels {
                    Some(l) => l[k] != l[(k + 1) % n],
                    None => is_jump(scan, k) && !is_grazing(scan, k),
                }
        })
        .collect();
    let Some(first_break) = breaks.iter().position(|&b| b) else {
        return vec![ArcRange { start: 0, len: n }];
    };
    let mut arcs = Vec::new();
    let mut k = first_break + 1;
    let stop = k + n;
    while k < stop {
        if !scan.is_return(k) {
            k += 1;
            continue;
        }
        let start = k;
        while !breaks[k % n] {
            k += 1;
        }
        arcs.push(ArcRange { start: start % n, len: k - start + 1 });
        k += 1;
    }
    arcs.sort_by_key(|a| a.start);
    arcs
}

/// Extends each arc by one sample at each end: onto the neighbouring free ray,
/// or, when another arc is adjacent, onto the farther of the two boundary
/// returns (the nearer arc extends, the farther one keeps it as endpoint).
pub fn extend_arcs(scan: &LidarScan, arcs: &[ArcRange]) -> Vec<ArcRange> {
    let n = scan.len();
    arcs.iter()
        .map(|a| {
            if a.len >= n {
                return *a;
            }
            let before = a.start + n - 1;
            let after = a.end() + 1;
            let grow_before = !scan.is_return(before) || scan.ranges[before % n] > scan.ranges[a.start % n];
            let grow_after = !scan.is_return(after) || scan.ranges[after % n] > scan.ranges[a.end() % n];
            let start = if grow_before { before % n } else { a.start };
            let len = (a.len + grow_before as usize + grow_after as usize).min(n);
            ArcRange { start, len }
        })
        .collect()
}

pub fn arc_list(scan: &LidarScan) -> ArcList {
    let arcs = extract_arcs(scan);
    let extended = extend_arcs(scan, &arcs);
    ArcList { arcs, extended }
}

/// A point of an arc with its bearing unwrapped along the arc.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingPoint {
    pub bearing: f64,
    pub range: f64,
}

impl BearingPoint {
    pub fn point(&self, origin: &Point) -> Point {
        origin.axpy(self.range, &Vector::polar(self.bearing))
    }
}

fn arc_points(scan: &LidarScan, arc: &ArcRange) -> Vec<BearingPoint> {
    arc.indices()
        .map(|k| BearingPoint { bearing: k as f64 * scan.step(), range: scan.ranges[k % scan.len()] })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualCone {
    /// Closest point of the active arc.
    pub center: Point,
    /// Unit bearing of the closest point.
    pub axis: Vector,
    /// Endpoint of the active arc on the side of the nominal command.
    pub endpoint: Point,
    pub theta: f64,
    pub beta: f64,
    /// Index into the extended arc list.
    pub arc: usize,
}

/// Distance from the scan origin at which the segment towards `x_d` meets the
/// polyline of `arc`, if it does before `x_d`. Consecutive samples are one
/// beam apart, so the polyline is star-shaped about the origin and only the
/// segment bracketing the destination bearing can be met. Stays defined when
/// samples collapse onto the origin.
fn crossing_distance(x: &Point, x_d: &Point, scan: &LidarScan, arc: &ArcRange) -> Option<f64> {
    let to_goal = x_d - x;
    let len = to_goal.norm();
    let e = to_goal.normalized()?;
    let n = scan.len();
    let f = to_goal.heading().rem_euclid(std::f64::consts::TAU) / scan.step();
    let k0 = (f.floor() as usize) % n;
    let k1 = (k0 + 1) % n;
    let on_beam = f - f.floor() == 0.0;
    if !arc.contains(k0, n) || !(on_beam || arc.contains(k1, n)) {
        return None;
    }
    let rel = |k: usize| scan.direction(k) * scan.ranges[k];
    let a = rel(k0);
    let t = if on_beam {
        scan.ranges[k0]
    } else {
        let b = rel(k1);
        let ab = &b - &a;
        let denom = e.cross2(&ab);
        if denom.abs() <= 1e-15 * ab.norm() {
            scan.ranges[k0].min(scan.ranges[k1])
        } else {
            let s = (-e.cross2(&a) / denom).clamp(0.0, 1.0);
            e.dot(&a.axpy(s, &ab)).max(0.0)
        }
    };
    (t <= len).then_some(t)
}

/// Closest point to the origin of the polyline through the detected samples
/// `detected`, searched on the two segments around the closest sample. Returns
/// it in polar form; bearings stay unwrapped relative to the samples.
///
/// With a positive noise `band` the bearing is the midpoint of the first and
/// last samples within `band` of the minimum range instead: near a surface
/// the range profile is flatter than the noise over a wide sector, so the
/// arg-min bearing is unreliable, while the sector is symmetric about the
/// normal to first order.
fn closest_detected(pts: &[BearingPoint], detected: std::ops::Range<usize>, band: f64) -> Option<BearingPoint> {
    let i = detected.clone().min_by(|&a, &b| pts[a].range.total_cmp(&pts[b].range))?;
    if band > 0.0 {
        let limit = pts[i].range + band;
        let first = detected.clone().find(|&k| pts[k].range <= limit)?;
        let last = detected.clone().rev().find(|&k| pts[k].range <= limit)?;
        return Some(BearingPoint { bearing: 0.5 * (pts[first].bearing + pts[last].bearing), range: pts[i].range });
    }
    let mut best = pts[i].clone();
    let zero = Vector::new2(0.0, 0.0);
    let neighbours = [i.checked_sub(1), Some(i + 1)];
    for j in neighbours.into_iter().flatten().filter(|j| detected.contains(j)) {
        let (a, b) = (pts[i].point(&zero), pts[j].point(&zero));
        let ab = &b - &a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            continue;
        }
        let t = (-a.dot(&ab) / len2).clamp(0.0, 1.0);
        let q = a.axpy(t, &ab);
        let range = q.norm();
        if range < best.range && range > 0.0 {
            // unwrap the bearing into the interval spanned by the two samples
            let offset = wrap_angle(q.heading() - pts[i].bearing);
            best = BearingPoint { bearing: pts[i].bearing + offset, range };
        }
    }
    Some(best)
}

/// Cone with axis at `closest` enclosing `pts` on the side of `u_d`. When
/// that side would need more than a right angle, which happens only for
/// noisy or dilated samples, the axis moves to the bisector of the extreme
/// bearings so that the cone still encloses every point, unless `x` already
/// lies inside the dilated set (`closest.range == 0`). `None` when `u_d` is zero.
fn cone_from_points(
    x: &Point,
    u_d: &Vector,
    closest: &BearingPoint,
    pts: &[BearingPoint],
    arc: usize,
) -> Option<VirtualCone> {
    let un = u_d.norm();
    if un == 0.0 {
        return None;
    }
    let hi = pts.iter().max_by(|a, b| a.bearing.total_cmp(&b.bearing))?;
    let lo = pts.iter().min_by(|a, b| a.bearing.total_cmp(&b.bearing))?;
    let pick = |base: f64| {
        let side = signed_angle2(&Vector::polar(base), u_d);
        let extreme = if side >= 0.0 { hi } else { lo };
        (extreme, (extreme.bearing - base).abs())
    };
    let mut base = closest.bearing;
    let (mut extreme, mut aperture) = pick(base);
    let span = hi.bearing - lo.bearing;
    // inside the dilated set the half-plane about the nearest detection is kept
    if aperture > FRAC_PI_2 && span < std::f64::consts::PI && closest.range > 0.0 {
        base = 0.5 * (hi.bearing + lo.bearing);
        (extreme, aperture) = pick(base);
    }
    let axis = Vector::polar(base);
    let theta = aperture.clamp(MIN_VIRTUAL_APERTURE, FRAC_PI_2);
    let beta = unit_angle(&(u_d * (1.0 / un)), &axis).min(theta);
    Some(VirtualCone { center: closest.point(x), axis, endpoint: extreme.point(x), theta, beta, arc })
}

/// Virtual cone of the extended arc crossed first by the segment `[x, x_d]`.
pub fn virtual_cone(x: &Point, x_d: &Point, scan: &LidarScan, arcs: &ArcList, gamma: f64) -> Option<VirtualCone> {
    virtual_cone_dilated(x, x_d, scan, arcs, gamma, None, 0.0)
}

/// Distance along the segment towards `x_d` at which it enters a ball of
/// radius `margin` around a detected sample, if it does before `x_d`.
fn dilated_crossing(x: &Point, x_d: &Point, scan: &LidarScan, arc: &ArcRange, margin: f64) -> Option<f64> {
    let to_goal = x_d - x;
    let len = to_goal.norm();
    let e = to_goal.normalized()?;
    arc.indices()
        .filter(|&k| scan.is_return(k))
        .filter_map(|k| {
            let p = scan.direction(k) * scan.ranges[k % scan.len()];
            let along = e.dot(&p);
            let off2 = p.norm_squared() - along * along;
            let h2 = margin * margin - off2;
            (h2 >= 0.0 && along + h2.sqrt() >= 0.0).then(|| (along - h2.sqrt()).max(0.0))
        })
        .filter(|&t| t <= len)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
}

fn virtual_cone_dilated(
    x: &Point,
    x_d: &Point,
    scan: &LidarScan,
    arcs: &ArcList,
    gamma: f64,
    corner_radius: Option<f64>,
    margin: f64,
) -> Option<VirtualCone> {
    // ties (several dilated arcs already containing x) go to the nearest detection
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, arc) in arcs.extended.iter().enumerate() {
        let mut hit = crossing_distance(x, x_d, scan, arc);
        if margin > 0.0 {
            if let Some(t) = dilated_crossing(x, x_d, scan, &arcs.arcs[i], margin) {
                hit = Some(hit.map_or(t, |h| h.min(t)));
            }
        }
        if let Some(t) = hit {
            let near = arcs.arcs[i].indices().map(|k| scan.ranges[k % scan.len()]).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(b, bn, _)| t < b || (t == b && near < bn)) {
                best = Some((t, near, i));
            }
        }
    }
    let (_, _, active) = best?;
    let mut pts = arc_points(scan, &arcs.extended[active]);
    let detected = &arcs.arcs[active];
    let first = (detected.start + scan.len() - arcs.extended[active].start) % scan.len();
    let last = first + detected.len - 1;
    let mut closest = closest_detected(&pts, first..last + 1, NOISE_BAND * scan.noise_sigma)?;
    if let Some(r) = corner_radius {
        let mut corners = dilate_endpoints(&pts[first], &pts[last], r);
        pts.append(&mut corners);
    }
    if margin > 0.0 {
        let mut balls: Vec<BearingPoint> =
            (first..=last).flat_map(|k| dilate_endpoints(&pts[k], &pts[k], margin)).collect();
        pts.append(&mut balls);
        closest.range = (closest.range - margin).max(0.0);
    }
    cone_from_points(x, &nominal(x, x_d, gamma), &closest, &pts, active)
}

/// Outer tangent points, seen from the scan origin, of balls of radius `r`
/// around the two endpoints of a detected portion.
fn dilate_endpoints(first: &BearingPoint, last: &BearingPoint, r: f64) -> Vec<BearingPoint> {
    let tangent = |p: &BearingPoint, sign: f64| {
        if p.range <= r {
            return BearingPoint { bearing: p.bearing + sign * FRAC_PI_2, range: 0.0 };
        }
        let half = (r / p.range).asin();
        BearingPoint { bearing: p.bearing + sign * half, range: (p.range * p.range - r * r).sqrt() }
    };
    vec![tangent(first, -1.0), tangent(last, 1.0)]
}

/// Replaces both endpoints of an ordered (counter-clockwise) portion of an
/// obstacle boundary by the arc of the ball of radius `r` around each
/// endpoint that is visible from `x`.
pub fn dilate_detected_corners(x: &Point, points: &[Point], r: f64, arc_samples: usize) -> Result<Vec<Point>> {
    if !(r > 0.0) {
        return Err(NavError::InvalidParameter(format!("dilation radius {r} must be positive")));
    }
    if points.len() < 2 {
        return Ok(points.to_vec());
    }
    // visible arc of B(e, r): from the near point to the outer tangent point
    let visible_arc = |e: &Point, outward: f64| -> Vec<Point> {
        let to_x = x - e;
        let d = to_x.norm();
        let half = if d > r { (r / d).acos() } else { std::f64::consts::PI };
        let near = to_x.heading();
        (0..=arc_samples)
            .map(|s| {
                let a = near + outward * half * s as f64 / arc_samples.max(1) as f64;
                e.axpy(r, &Vector::polar(a))
            })
            .collect()
    };
    let n = points.len();
    let mut start = visible_arc(&points[0], 1.0);
    start.reverse();
    let mut out = start;
    out.extend_from_slice(&points[1..n - 1]);
    out.extend(visible_arc(&points[n - 1], -1.0));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub gamma: f64,
    pub lidar: LidarSpec,
    /// Radius of the balls placed on detected endpoints (non-smooth obstacles).
    #[serde(default)]
    pub corner_dilation: Option<f64>,
    /// Radius of the ball placed on every detected sample, so that the robot
    /// keeps this much distance from what it detects. Zero uses the
    /// measurements as they are; with range noise it should exceed a few
    /// standard deviations.
    #[serde(default)]
    pub range_margin: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams { gamma: 1.0, lidar: LidarSpec::default(), corner_dilation: None, range_margin: 0.0 }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        if !(self.gamma > 0.0) || !(self.range_margin >= 0.0) || self.range_margin >= self.lidar.range {
            return Err(NavError::InvalidParameter("sensor law needs gamma > 0 and 0 ≤ range_margin < range".into()));
        }
        if let Some(r) = self.corner_dilation {
            if !(r > 0.0) {
                return Err(NavError::InvalidParameter(format!("dilation radius {r} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOutput {
    pub u: Vector,
    pub mode: Mode,
    pub cone: Option<VirtualCone>,
}

/// Control from an existing scan taken at `x`.
pub fn sensor_control_from_scan(x: &Point, x_d: &Point, scan: &LidarScan, params: &SensorParams) -> SensorOutput {
    let u_d = nominal(x, x_d, params.gamma);
    let arcs = arc_list(scan);
    match virtual_cone_dilated(x, x_d, scan, &arcs, params.gamma, params.corner_dilation, params.range_margin) {
        None => SensorOutput { u: u_d, mode: Mode::Visible, cone: None },
        Some(cone) => {
            let un = u_d.norm();
            let u = u_d.axpy(-un * (cone.theta - cone.beta).sin() / cone.theta.sin(), &cone.axis);
            SensorOutput { u, mode: Mode::Projected, cone: Some(cone) }
        }
    }
}

/// Scans from `x` and applies the sensor-based law.
pub fn sensor_control<R: Rng + ?Sized>(
    x: &Point,
    x_d: &Point,
    world: &World,
    params: &SensorParams,
    rng: &mut R,
) -> Result<(SensorOutput, LidarScan)> {
    let s = scan(x, world, &params.lidar, rng)?;
    Ok((sensor_control_from_scan(x, x_d, &s, params), s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicycleParams {
    pub k_v: f64,
    pub p: u32,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        UnicycleParams { k_v: 0.8, p: 3, v_max: 0.26, omega_max: 1.82 }
    }
}

impl UnicycleParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_v > 0.0 && self.p >= 1 && self.v_max > 0.0 && self.omega_max > 0.0 {
            Ok(())
        } else {
            Err(NavError::InvalidParameter("unicycle gains and limits must be positive".into()))
        }
    }
}

/// Linear and angular speed tracking the planar command `u` from heading `psi`.
/// `|v| ≤ v_max` and `|ω| ≤ ω_max` by construction; `ω` contracts the heading error.
pub fn unicycle_transform(u: &Vector, psi: f64, params: &UnicycleParams) -> (f64, f64) {
    let speed = u.norm();
    if speed == 0.0 {
        return (0.0, 0.0);
    }
    let err = wrap_angle(psi - u.heading());
    let gate = (0.5 * err).cos().powi(2 * params.p as i32);
    let v = (params.k_v * speed * gate).min(params.v_max);
    let omega = -params.omega_max * (0.5 * err).sin();
    (v, omega)
}

/// Writes a scan as CSV: `theta_deg, rho, hit_x, hit_y, arc_id, extended_arc_id`.
/// Arc ids are empty for samples outside every arc.
pub fn write_scan_csv<W: Write>(scan: &LidarScan, arcs: &ArcList, out: W) -> std::io::Result<()> {
    let n = scan.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_deg", "rho", "hit_x", "hit_y", "arc_id", "extended_arc_id"])?;
    let find = |list: &[ArcRange], k: usize| {
        list.iter().position(|a| a.contains(k, n)).map(|i| i.to_string()).unwrap_or_default()
    };
    for k in 0..n {
        let p = scan.point(k);
        w.write_record([
            format!("{}", k as f64 * scan.resolution_deg),
            format!("{}", scan.ranges[k]),
            format!("{}", p.x()),
            format!("{}", p.y()),
            find(&arcs.arcs, k),
            find(&arcs.extended, k),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller_map::{single_obstacle_control, ControlParams};
    use crate::geometry::angle;
    use crate::geometry::segment_intersection2;
    use crate::world::{random_world, sample_ball, Obstacle, RandomWorldSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v2(x: f64, y: f64) -> Point {
        Vector::new2(x, y)
    }

    fn noiseless(res: f64, range: f64) -> LidarSpec {
        LidarSpec { resolution_deg: res, range, noise_sigma: 0.0, min_range: 0.0 }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn spec_validation() {
        assert!(noiseless(1.0, 3.0).validate().is_ok());
        assert!(noiseless(0.7, 3.0).validate().is_err());
        assert!(noiseless(0.0, 3.0).validate().is_err());
        assert!(noiseless(1.0, 0.0).validate().is_err());
        assert_eq!(noiseless(0.25, 3.0).beams(), 1440);
    }

    #[test]
    fn empty_world_scan() {
        let w = World::new(2, 10.0, vec![]).unwrap();
        let s = scan(&v2(1.0, 1.0), &w, &noiseless(1.0, 2.0), &mut rng()).unwrap();
        assert_eq!(s.len(), 360);
        assert!(s.ranges.iter().all(|&r| r == 2.0));
        assert_eq!(arc_list(&s), ArcList::default());
    }

    #[test]
    fn single_disc_scan_values() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 5.0), &mut rng()).unwrap();
        assert!((s.ranges[0] - 2.0).abs() < 1e-12);
        assert!(s.point(0).max_abs_diff(&v2(2.0, 0.0)) < 1e-12);
        let arcs = arc_list(&s);
        assert_eq!(arcs.arcs.len(), 1);
        let ext = arcs.extended[0];
        assert!(!s.is_return(ext.start) && !s.is_return(ext.end()));
        assert_eq!(ext.len, arcs.arcs[0].len + 2);
    }

    #[test]
    fn culled_scan_matches_full_ray_casts() {
        for seed in 0..4 {
            let spec = RandomWorldSpec {
                seed,
                m: 15,
                n: 2,
                r0: 6.0,
                min_separation: 0.1,
                radius_range: (0.2, 1.0),
                keep_clear: vec![],
            };
            let w = random_world(&spec).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let x = sample_ball(&mut r, 2, 5.5);
                if w.clearance(&x) <= 0.0 {
                    continue;
                }
                let lidar = noiseless(1.0, 20.0);
                let s = scan(&x, &w, &lidar, &mut rng()).unwrap();
                for k in 0..s.len() {
                    let (t, label) = w.ray_cast_labelled(&x, &s.direction(k));
                    assert_eq!(s.ranges[k], t.min(lidar.range));
                    assert_eq!(s.labels.as_ref().unwrap()[k], label);
                }
            }
        }
    }

    #[test]
    fn noise_only_on_returns() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let spec = LidarSpec { noise_sigma: 0.02, ..noiseless(1.0, 5.0) };
        let s = scan(&v2(0.0, 0.0), &w, &spec, &mut rng()).unwrap();
        let clean = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 5.0), &mut rng()).unwrap();
        let mut moved = 0;
        for k in 0..360 {
            if clean.is_return(k) {
                moved += (s.ranges[k] != clean.ranges[k]) as usize;
                assert!((s.ranges[k] - clean.ranges[k]).abs() < 0.2);
            } else {
                assert_eq!(s.ranges[k], 5.0);
            }
        }
        assert!(moved > 0);
    }

    #[test]
    fn occluding_discs_share_an_endpoint() {
        // the near disc hides part of the far one; the far disc's nearest point stays visible
        let w = World::new(2, 20.0, vec![Obstacle::disc([3.0, 0.5], 1.0), Obstacle::disc([7.0, -2.0], 1.5)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 10.0), &mut rng()).unwrap();
        let arcs = arc_list(&s);
        assert_eq!(arcs.arcs.len(), 2, "{:?}", arcs.arcs);
        let n = s.len();
        let (a, b) = (arcs.extended[0], arcs.extended[1]);
        let ends_a = [a.start % n, a.end() % n];
        let ends_b = [b.start % n, b.end() % n];
        let shared: Vec<_> = ends_a.iter().filter(|e| ends_b.contains(e)).collect();
        assert_eq!(shared.len(), 1, "{ends_a:?} {ends_b:?}");
        // no interior overlap: only the shared endpoint is common
        let common = (0..n).filter(|&k| a.contains(k, n) && b.contains(k, n)).count();
        assert_eq!(common, 1);
        for (orig, ext) in arcs.arcs.iter().zip(&arcs.extended) {
            assert!(orig.indices().all(|k| ext.contains(k % n, n)));
        }
    }

    fn unlabelled(mut s: LidarScan) -> LidarScan {
        s.labels = None;
        s
    }

    #[test]
    fn occluded_disc_with_hidden_nearest_point_joins_near_arc_without_labels() {
        let w = World::new(2, 20.0, vec![Obstacle::disc([3.0, 0.5], 1.0), Obstacle::disc([7.0, -0.5], 1.5)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 10.0), &mut rng()).unwrap();
        assert_eq!(extract_arcs(&unlabelled(s.clone())).len(), 1);
        assert_eq!(extract_arcs(&s).len(), 2);
    }

    #[test]
    fn unlabelled_scans_split_like_labelled_ones_for_separated_discs() {
        let w = World::new(2, 20.0, vec![Obstacle::disc([3.0, 0.5], 1.0), Obstacle::disc([7.0, -2.0], 1.5)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 10.0), &mut rng()).unwrap();
        assert_eq!(extract_arcs(&s), extract_arcs(&unlabelled(s)));
    }

    #[test]
    fn surrounded_sensor_still_sees_one_arc_per_obstacle() {
        // every beam returns; neighbouring discs must not merge into a ring
        let mut obstacles = Vec::new();
        for i in 0..8 {
            let a = i as f64 * std::f64::consts::TAU / 8.0;
            obstacles.push(Obstacle::disc([2.0 * a.cos(), 2.0 * a.sin()], 0.9));
        }
        let w = World::new(2, 20.0, obstacles).unwrap();
        let x = v2(0.3, 0.1);
        let s = scan(&x, &w, &noiseless(1.0, 3.4), &mut rng()).unwrap();
        assert!((0..s.len()).all(|k| s.is_return(k)));
        let arcs = arc_list(&s);
        assert_eq!(arcs.arcs.len(), 8);
        let cone = virtual_cone(&x, &v2(5.0, 0.0), &s, &arcs, 1.0).expect("segment crosses a disc");
        assert!(cone.theta < FRAC_PI_2);
    }

    #[test]
    fn wraparound_arc() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(1.0, 5.0), &mut rng()).unwrap();
        let arcs = extract_arcs(&s);
        assert_eq!(arcs.len(), 1);
        assert!(arcs[0].start > 300 && arcs[0].contains(0, 360) && arcs[0].contains(10, 360));
    }

    #[test]
    fn no_active_arc_when_segment_is_clear() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let x = v2(0.0, 0.0);
        let xd = v2(0.0, 3.0);
        let s = scan(&x, &w, &noiseless(1.0, 5.0), &mut rng()).unwrap();
        assert!(virtual_cone(&x, &xd, &s, &arc_list(&s), 1.0).is_none());
        let out = sensor_control_from_scan(&x, &xd, &s, &SensorParams::default());
        assert_eq!(out.mode, Mode::Visible);
        assert!(out.u.max_abs_diff(&xd) < 1e-15);
    }

    #[test]
    fn collinear_virtual_center() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let x = v2(6.0, 0.0);
        let xd = v2(0.0, 0.0);
        let spec = noiseless(0.5, 4.0);
        let s = scan(&x, &w, &spec, &mut rng()).unwrap();
        let cone = virtual_cone(&x, &xd, &s, &arc_list(&s), 1.0).unwrap();
        assert!(cone.center.distance(&v2(4.0, 0.0)) <= 1.0 * spec.step() + 1e-12);
        assert!(cone.beta.abs() < 1e-12);
        let out = sensor_control_from_scan(&x, &xd, &s, &SensorParams { lidar: spec, ..Default::default() });
        assert!(out.u.norm() < 1e-9);
    }

    #[test]
    fn control_reduces_to_nominal_at_cone_edge() {
        let x = v2(0.0, 0.0);
        let u_d = v2(1.0, 0.0);
        let pts = vec![
            BearingPoint { bearing: -0.5, range: 2.0 },
            BearingPoint { bearing: -0.4, range: 1.0 },
            BearingPoint { bearing: 0.0, range: 2.0 },
        ];
        let cone = cone_from_points(&x, &u_d, &pts[1], &pts, 0).unwrap();
        assert!((cone.theta - 0.4).abs() < 1e-12);
        assert!((cone.beta - 0.4).abs() < 1e-12);
        let u = u_d.axpy(-(cone.theta - cone.beta).sin() / cone.theta.sin(), &cone.axis);
        assert!(u.max_abs_diff(&u_d) < 1e-12);
    }

    #[test]
    fn axis_resolves_the_nearest_point_between_beams() {
        // wall y = 1e-5 seen from the origin; its foot lies 0.3 beams off a sample
        let d = 1e-5;
        let step = 1f64.to_radians();
        let foot = FRAC_PI_2 + 0.3 * step;
        let pts: Vec<BearingPoint> = (-3..=3)
            .map(|k| {
                let b = FRAC_PI_2 + k as f64 * step;
                BearingPoint { bearing: b, range: d / (b - foot).cos() }
            })
            .collect();
        let closest = closest_detected(&pts, 0..7, 0.0).unwrap();
        let cone = cone_from_points(&v2(0.0, 0.0), &v2(1.0, 1.0), &closest, &pts, 0).unwrap();
        assert!((cone.axis.heading() - foot).abs() < 1e-9, "{}", cone.axis.heading() - foot);
        assert!((cone.center.norm() - d).abs() < 1e-15);
    }

    #[test]
    fn noisy_axis_points_at_the_nearest_point_close_to_a_surface() {
        // clearance below the noise level: the arg-min bearing wanders over a
        // wide sector, the band midpoint does not
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let x = v2(1.97, 0.0);
        let spec = LidarSpec { noise_sigma: 0.02, ..noiseless(0.5, 5.0) };
        let mut r = rng();
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let s = scan(&x, &w, &spec, &mut r).unwrap();
            let cone = virtual_cone(&x, &v2(6.0, 0.1), &s, &arc_list(&s), 1.0).unwrap();
            worst = worst.max(cone.axis.heading().abs());
        }
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn range_margin_keeps_the_command_outside_the_dilated_disc() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let x = v2(1.5, 0.2);
        let xd = v2(6.0, 0.0);
        let s = scan(&x, &w, &noiseless(1.0, 5.0), &mut rng()).unwrap();
        let margin = 0.3;
        let params = SensorParams { lidar: noiseless(1.0, 5.0), range_margin: margin, ..Default::default() };
        let out = sensor_control_from_scan(&x, &xd, &s, &params);
        assert_eq!(out.mode, Mode::Projected);
        // the command is tangent to or outside the disc of radius 1.3
        let dir = out.u.normalized().unwrap();
        let to_c = &v2(3.0, 0.0) - &x;
        let miss = (to_c.norm_squared() - dir.dot(&to_c).powi(2)).sqrt();
        assert!(miss >= 1.0 + margin - 0.02, "{miss}");
    }

    #[test]
    fn dilation_examples() {
        let x = v2(0.0, 0.0);
        // corner endpoints at distance 2
        let a = v2(2.0, 0.0);
        let b = Vector::polar(0.3) * 2.0;
        let out = dilate_detected_corners(&x, &[a.clone(), b.clone()], 0.2, 64).unwrap();
        let first = out.first().unwrap();
        let last = out.last().unwrap();
        let grow_start = signed_angle2(first, &a);
        let grow_end = signed_angle2(&b, last);
        assert!((grow_start - 0.1f64.asin()).abs() < 1e-12, "{grow_start}");
        assert!((grow_end - 0.1f64.asin()).abs() < 1e-12);
        // every point stays at distance r from its endpoint
        assert!(out.iter().take(65).all(|p| (p.distance(&a) - 0.2).abs() < 1e-12));
        assert!(dilate_detected_corners(&x, &[a.clone(), b.clone()], 0.0, 8).is_err());
        // vanishing radius leaves the polyline in place
        let tiny = dilate_detected_corners(&x, &[a.clone(), b.clone()], 1e-12, 8).unwrap();
        assert!(tiny.first().unwrap().distance(&a) < 1e-11 && tiny.last().unwrap().distance(&b) < 1e-11);
    }

    #[test]
    fn corner_dilation_widens_the_cone() {
        let sq = Obstacle::polygon(vec![v2(2.0, -1.0), v2(4.0, -1.0), v2(4.0, 1.0), v2(2.0, 1.0)]);
        let w = World::new(2, 10.0, vec![sq]).unwrap();
        let x = v2(0.0, 0.1);
        let xd = v2(8.0, 0.0);
        let lidar = noiseless(1.0, 3.0);
        let s = scan(&x, &w, &lidar, &mut rng()).unwrap();
        let plain = sensor_control_from_scan(&x, &xd, &s, &SensorParams { lidar: lidar.clone(), ..Default::default() });
        let dil = sensor_control_from_scan(
            &x,
            &xd,
            &s,
            &SensorParams { lidar, corner_dilation: Some(0.2), ..Default::default() },
        );
        let (p, d) = (plain.cone.unwrap(), dil.cone.unwrap());
        assert!(d.theta >= p.theta);
        assert!(d.theta <= p.theta + (0.2f64 / 2.0).asin() + 1e-9);
    }

    #[test]
    fn unicycle_examples() {
        let p = UnicycleParams::default();
        let (v, w) = unicycle_transform(&v2(0.1, 0.0), 0.0, &p);
        assert!((v - 0.08).abs() < 1e-15 && w == 0.0);
        let (v, w) = unicycle_transform(&v2(-1.0, 0.0), 0.0, &p);
        assert!(v.abs() < 1e-15 && (w.abs() - 1.82).abs() < 1e-12);
        assert_eq!(unicycle_transform(&Vector::zeros(2), 1.0, &p), (0.0, 0.0));
        // heading left of the command turns clockwise
        let (_, w) = unicycle_transform(&v2(1.0, 0.0), 0.5, &p);
        assert!(w < 0.0);
    }

    #[test]
    fn csv_dump_columns() {
        let w = World::new(2, 10.0, vec![Obstacle::disc([3.0, 0.0], 1.0)]).unwrap();
        let s = scan(&v2(0.0, 0.0), &w, &noiseless(10.0, 5.0), &mut rng()).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&s, &arc_list(&s), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "theta_deg,rho,hit_x,hit_y,arc_id,extended_arc_id");
        assert_eq!(lines.len(), 37);
        assert!(lines[1].starts_with("0,2,2,0,0,0"));
        assert!(lines[10].ends_with(",,"));
    }

    #[test]
    fn dense_scan_matches_map_law() {
        let w = World::new(2, 20.0, vec![Obstacle::disc([0.0, 0.0], 1.0)]).unwrap();
        let xd = v2(-5.0, 0.0);
        let lidar = noiseless(0.25, 15.0);
        let params = SensorParams { lidar: lidar.clone(), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 200 {
            let x = sample_ball(&mut rng, 2, 6.0);
            if w.clearance(&x) < 0.05 {
                continue;
            }
            let map = single_obstacle_control(&x, &xd, &w, 0, &ControlParams::default()).unwrap();
            if map.u.norm() < 1e-6 {
                continue;
            }
            let (out, _) = sensor_control(&x, &xd, &w, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let err = angle(&out.u, &map.u).unwrap();
            assert!(err <= 2.0 * lidar.step() + 1e-9, "{x:?}: {err}");
            checked += 1;
        }
    }

    fn rays_before(x: &Point, u: &Vector, pts: &[Point], dist: f64) -> bool {
        let Some(dir) = u.normalized() else { return false };
        let far = x.axpy(dist, &dir);
        pts.windows(2)
            .any(|w| segment_intersection2(x, &far, &w[0], &w[1]).is_some_and(|(t, _)| t * dist < dist * (1.0 - 1e-9)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn limits_hold(ux in -5.0f64..5.0, uy in -5.0f64..5.0, psi in -10.0f64..10.0) {
            let p = UnicycleParams::default();
            let (v, w) = unicycle_transform(&v2(ux, uy), psi, &p);
            prop_assert!(v.abs() <= p.v_max && w.abs() <= p.omega_max);
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn projected_ray_stays_off_active_arc(seed in 0u64..300, res in prop::sample::select(vec![0.5f64, 1.0, 2.0])) {
            let xd = v2(0.0, 0.0);
            let w = random_world(&RandomWorldSpec {
                seed, m: 10, n: 2, r0: 10.0, min_separation: 0.4, radius_range: (0.4, 1.3), keep_clear: vec![xd.clone()],
            }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lidar = noiseless(res, 3.0);
            for _ in 0..20 {
                let x = sample_ball(&mut rng, 2, 9.5);
                if w.clearance(&x) <= 0.01 {
                    continue;
                }
                let s = scan(&x, &w, &lidar, &mut rng).unwrap();
                let arcs = arc_list(&s);
                let out = sensor_control_from_scan(&x, &xd, &s, &SensorParams { lidar: lidar.clone(), ..Default::default() });
                if let Some(cone) = &out.cone {
                    prop_assert!(cone.theta > 0.0 && cone.theta <= FRAC_PI_2 && cone.beta >= 0.0 && cone.beta <= cone.theta);
                    let pts: Vec<Point> = arcs.extended[cone.arc].indices().map(|k| s.point(k)).collect();
                    let reach = cone.center.distance(&x);
                    prop_assert!(!rays_before(&x, &out.u, &pts, reach), "{:?}", x);
                }
            }
        }
    }
}
