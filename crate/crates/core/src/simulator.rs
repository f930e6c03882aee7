//! Closed-loop simulation of the navigation laws and batch experiments.
//!
//! The single integrator `ẋ = u(x)` is advanced with fixed-step RK4 (Euler
//! on steps where RK4 would leave free space, and a held command per step
//! when observations are noisy); the unicycle
//! `(ẋ, ψ̇) = (v (cos ψ, sin ψ), ω)` with forward Euler. Runs stop
//! on convergence, on a persistent zero command, at the time limit, or when
//! the state leaves free space.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller_map::{control, single_obstacle_control, ControlParams, Mode};
use crate::controller_sensor::{sensor_control, unicycle_transform, LidarSpec, SensorParams, UnicycleParams};
use crate::error::{NavError, Result};
use crate::geometry::{Point, Vector};
use crate::tvg::{oracle_length, path_match, rld};
use crate::world::{sample_ball, World};

/// Consecutive zero-command steps that declare a stall.
pub const STALL_STEPS: usize = 100;
/// Zero-command threshold, relative to `γ r0`.
pub const STALL_TOL: f64 = 1e-8;
/// Clearance below `-SAFETY_TOL · r0` is a safety violation.
pub const SAFETY_TOL: f64 = 1e-6;
/// Size of the stall perturbation, relative to `r0`.
pub const PERTURBATION: f64 = 1e-3;
/// Minimum clearance, relative to the workspace radius, of the point a scan
/// is taken from.
pub const SENSOR_LIFT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Map,
    SingleObstacle,
    Sensor,
    UnicycleSensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub t_max: f64,
    pub controller: ControllerKind,
    /// Gain and stopping radius shared by every law.
    pub control: ControlParams,
    pub lidar: LidarSpec,
    #[serde(default)]
    pub corner_dilation: Option<f64>,
    /// Extra distance the sensor law keeps from detected returns.
    #[serde(default)]
    pub range_margin: f64,
    pub unicycle: UnicycleParams,
    /// Obstacle handled by the single-obstacle law.
    #[serde(default)]
    pub obstacle: usize,
    pub initial_heading: f64,
    /// Standard deviations of position and heading noise seen by the controller.
    #[serde(default)]
    pub pose_noise: Option<(f64, f64)>,
    pub perturb_on_stall: bool,
    pub seed: u64,
    /// Keep every `record_stride`-th state; 0 keeps none.
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let control = ControlParams::default();
        SimConfig {
            step: 1e-3 / control.gamma,
            t_max: 50.0 / control.gamma,
            controller: ControllerKind::Map,
            control,
            lidar: LidarSpec::default(),
            corner_dilation: None,
            range_margin: 0.0,
            unicycle: UnicycleParams::default(),
            obstacle: 0,
            initial_heading: 0.0,
            pose_noise: None,
            perturb_on_stall: false,
            seed: 0,
            record_stride: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, world: &World) -> Result<()> {
        if !(self.step > 0.0 && self.t_max > 0.0) {
            return Err(NavError::InvalidParameter("step and t_max must be positive".into()));
        }
        self.control.validate(world.len())?;
        match self.controller {
            ControllerKind::Map if !world.all_discs() => {
                Err(NavError::Unsupported("the map-based law needs disc obstacles".into()))
            }
            ControllerKind::SingleObstacle if self.obstacle >= world.len() => {
                Err(NavError::InvalidParameter(format!("no obstacle {}", self.obstacle)))
            }
            ControllerKind::Sensor | ControllerKind::UnicycleSensor => {
                if world.dim != 2 {
                    return Err(NavError::Unsupported("the sensor-based law is planar".into()));
                }
                self.sensor_params().validate()?;
                if self.controller == ControllerKind::UnicycleSensor {
                    self.unicycle.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn sensor_params(&self) -> SensorParams {
        SensorParams {
            gamma: self.control.gamma,
            lidar: self.lidar.clone(),
            corner_dilation: self.corner_dilation,
            range_margin: self.range_margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    StalledAtEquilibrium,
    TMaxExceeded,
    SafetyViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicycleState {
    pub psi: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Point,
    pub u: Vector,
    pub mode: Mode,
    pub active: Vec<usize>,
    pub clearance: f64,
    pub unicycle: Option<UnicycleState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub t: f64,
    pub displacement: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub outcome: Outcome,
    pub path_length: f64,
    pub min_clearance: f64,
    pub final_state: Point,
    pub final_time: f64,
    pub steps: usize,
    /// Largest one-step increase of `½‖x − x_d‖²`.
    pub max_lyapunov_increase: f64,
    pub perturbation: Option<Perturbation>,
    /// Largest `|v|` and `|ω|` commanded (unicycle only).
    pub max_speeds: Option<(f64, f64)>,
    /// Steps where the RK4 update left free space and the Euler update was used.
    pub euler_fallbacks: usize,
}

/// Command at one state, with the diagnostic fields of a trajectory row.
struct Command {
    u: Vector,
    mode: Mode,
    active: Vec<usize>,
}

struct Law<'a> {
    world: &'a World,
    x_d: &'a Point,
    config: &'a SimConfig,
    sensor: SensorParams,
    rng: ChaCha8Rng,
}

impl Law<'_> {
    fn eval(&mut self, x: &Point) -> Result<Command> {
        match self.config.controller {
            ControllerKind::Map => {
                let out = control(x, self.x_d, self.world, &self.config.control)?;
                Ok(Command { active: out.trace.obstacle_sequence(), u: out.u, mode: out.mode })
            }
            ControllerKind::SingleObstacle => {
                let out = single_obstacle_control(x, self.x_d, self.world, self.config.obstacle, &self.config.control)?;
                Ok(Command { active: out.trace.obstacle_sequence(), u: out.u, mode: out.mode })
            }
            ControllerKind::Sensor | ControllerKind::UnicycleSensor => {
                let (out, _) = sensor_control(x, self.x_d, self.world, &self.sensor, &mut self.rng)?;
                // obstacle carrying the closest detected point, for diagnostics only
                let active = out
                    .cone
                    .as_ref()
                    .and_then(|c| {
                        self.world
                            .obstacles
                            .iter()
                            .enumerate()
                            .map(|(i, o)| (i, o.signed_distance(&c.center).abs()))
                            .min_by(|a, b| a.1.total_cmp(&b.1))
                            .map(|(i, _)| vec![i])
                    })
                    .unwrap_or_default();
                Ok(Command { u: out.u, mode: out.mode, active })
            }
        }
    }

    /// Controller input: the true state, or a noisy copy of it.
    fn observe(&mut self, x: &Point, psi: f64) -> (Point, f64) {
        match self.config.pose_noise {
            Some((sp, sh)) if sp > 0.0 || sh > 0.0 => {
                let mut y = x.clone();
                for k in 0..y.dim() {
                    y[k] += sp * self.rng.sample::<f64, _>(StandardNormal);
                }
                (y, psi + sh * self.rng.sample::<f64, _>(StandardNormal))
            }
            _ => (x.clone(), psi),
        }
    }
}

/// Nearest point at clearance `lift` when `q` is closer than that to an
/// obstacle; `q` otherwise. Intermediate integrator stages may cross a
/// boundary by a higher-order amount where the path turns onto an obstacle;
/// the field is extended continuously there by evaluating it on (or, for a
/// range sensor that cannot resolve zero distances, just off) the boundary.
fn to_free(world: &World, q: &Point, lift: f64) -> Point {
    let mut p = q.clone();
    for o in &world.obstacles {
        let d = o.signed_distance(&p);
        if d < lift {
            let b = o.closest_boundary_point(&p);
            let out = if d < 0.0 { &b - &p } else { &p - &b };
            p = match out.normalized() {
                Some(n) if lift > 0.0 => b.axpy(lift, &n),
                _ => b,
            };
        }
    }
    let n = p.norm();
    if n > world.r0() {
        p = p * (world.r0() / n);
    }
    p
}

/// Random unit direction orthogonal to `normal` (any direction if `normal` is zero).
fn lateral_direction<R: Rng>(rng: &mut R, normal: &Vector) -> Vector {
    let n = normal.normalized();
    loop {
        let g = Vector::from((0..normal.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
        let g = match &n {
            Some(n) => g.axpy(-g.dot(n), n),
            None => g,
        };
        if let Some(d) = g.normalized() {
            return d;
        }
    }
}

/// Simulates one closed-loop run from `x0`.
pub fn integrate(world: &World, x0: &Point, x_d: &Point, config: &SimConfig) -> Result<Trajectory> {
    config.validate(world)?;
    world.check_free(x0)?;
    world.check_free(x_d)?;
    let r0 = world.r0();
    let gamma = config.control.gamma;
    let stall_tol = STALL_TOL * gamma * r0;
    let unicycle = config.controller == ControllerKind::UnicycleSensor;
    let h = config.step;
    let max_steps = (config.t_max / h).ceil() as usize;

    let sensor = matches!(config.controller, ControllerKind::Sensor | ControllerKind::UnicycleSensor);
    let noisy =
        (sensor && config.lidar.noise_sigma > 0.0) || config.pose_noise.is_some_and(|(sp, sh)| sp > 0.0 || sh > 0.0);
    // scans need a strictly positive distance to resolve the nearest point
    let lift = if sensor { SENSOR_LIFT * r0 } else { 0.0 };
    let mut law =
        Law { world, x_d, config, sensor: config.sensor_params(), rng: ChaCha8Rng::seed_from_u64(config.seed) };
    let mut perturb_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0f5_7a11);

    let mut x = x0.clone();
    let mut psi = config.initial_heading;
    let mut t = 0.0;
    let mut path_length = 0.0;
    let mut min_clearance = world.clearance(&x);
    let mut max_dv = f64::NEG_INFINITY;
    let mut max_speeds = unicycle.then_some((0.0f64, 0.0f64));
    let mut perturbation = None;
    let mut fallbacks = 0usize;
    let mut still = 0usize;
    let mut rows = Vec::new();
    let lyapunov = |p: &Point| 0.5 * (p - x_d).norm_squared();

    let mut step = 0usize;
    let outcome = loop {
        if x.distance(x_d) <= config.control.e_c {
            break Outcome::Converged;
        }
        if step >= max_steps {
            break Outcome::TMaxExceeded;
        }
        let (seen, seen_psi) = law.observe(&x, psi);
        let first = law.eval(&to_free(world, &seen, lift))?;
        let mut uni = None;
        let next = if unicycle {
            let (v, omega) = unicycle_transform(&first.u, seen_psi, &config.unicycle);
            if let Some((mv, mw)) = max_speeds.as_mut() {
                *mv = mv.max(v.abs());
                *mw = mw.max(omega.abs());
            }
            uni = Some(UnicycleState { psi, v, omega });
            let moved = x.axpy(h * v, &Vector::polar(psi));
            psi = crate::geometry::wrap_angle(psi + h * omega);
            moved
        } else if noisy {
            // a resampled field has no smooth stages: hold one command per step
            x.axpy(h, &first.u)
        } else {
            let k1 = first.u.clone();
            let k2 = law.eval(&to_free(world, &x.axpy(0.5 * h, &k1), lift))?.u;
            let k3 = law.eval(&to_free(world, &x.axpy(0.5 * h, &k2), lift))?.u;
            let k4 = law.eval(&to_free(world, &x.axpy(h, &k3), lift))?.u;
            let euler = x.axpy(h, &k1);
            let rk4 = &x + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
            // near a boundary the field is only piecewise smooth and the stage
            // average can cut a corner; a step along the command itself cannot
            if world.clearance(&rk4) < 0.0 && world.clearance(&euler) >= world.clearance(&rk4) {
                fallbacks += 1;
                euler
            } else {
                rk4
            }
        };
        if config.record_stride > 0 && step.is_multiple_of(config.record_stride) {
            rows.push(TrajectoryRow {
                t,
                x: x.clone(),
                u: first.u.clone(),
                mode: first.mode,
                active: first.active.clone(),
                clearance: world.clearance(&x),
                unicycle: uni,
            });
        }

        still = if first.u.norm() <= stall_tol { still + 1 } else { 0 };
        if still >= STALL_STEPS {
            if config.perturb_on_stall && perturbation.is_none() {
                let dir = lateral_direction(&mut perturb_rng, &(&x - x_d));
                let d = dir * (PERTURBATION * r0);
                let candidate = if world.clearance(&(&x + &d)) >= 0.0 { &x + &d } else { &x - &d };
                path_length += x.distance(&candidate);
                perturbation = Some(Perturbation { t, displacement: &candidate - &x });
                x = candidate;
                still = 0;
                step += 1;
                t += h;
                continue;
            }
            break Outcome::StalledAtEquilibrium;
        }

        max_dv = max_dv.max(lyapunov(&next) - lyapunov(&x));
        path_length += x.distance(&next);
        x = next;
        t += h;
        step += 1;
        let c = world.clearance(&x);
        min_clearance = min_clearance.min(c);
        if c < -SAFETY_TOL * r0 {
            break Outcome::SafetyViolation;
        }
    };

    if config.record_stride > 0 {
        let u = law.eval(&x).map(|c| (c.u, c.mode, c.active)).ok();
        let (u, mode, active) = u.unwrap_or((Vector::zeros(world.dim), Mode::Visible, Vec::new()));
        rows.push(TrajectoryRow {
            t,
            x: x.clone(),
            u,
            mode,
            active,
            clearance: world.clearance(&x),
            unicycle: unicycle.then_some(UnicycleState { psi, v: 0.0, omega: 0.0 }),
        });
    }

    Ok(Trajectory {
        rows,
        outcome,
        path_length,
        min_clearance,
        final_state: x,
        final_time: t,
        steps: step,
        max_lyapunov_increase: if max_dv.is_finite() { max_dv } else { 0.0 },
        perturbation,
        max_speeds,
        euler_fallbacks: fallbacks,
    })
}

impl Trajectory {
    /// CSV with columns `t, x1..xn, u1..un, mode, active_ids, clearance[, psi, v, omega]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.final_state.dim();
        let unicycle = self.rows.iter().any(|r| r.unicycle.is_some());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.extend((1..=n).map(|k| format!("u{k}")));
        header.extend(["mode", "active_ids", "clearance"].map(String::from));
        if unicycle {
            header.extend(["psi", "v", "omega"].map(String::from));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.t.to_string()];
            rec.extend(r.x.iter().map(f64::to_string));
            rec.extend(r.u.iter().map(f64::to_string));
            rec.push(match r.mode {
                Mode::Visible => "visible".into(),
                Mode::Projected => "projected".into(),
            });
            rec.push(r.active.iter().map(usize::to_string).collect::<Vec<_>>().join(";"));
            rec.push(r.clearance.to_string());
            if unicycle {
                let s = r.unicycle.clone().unwrap_or(UnicycleState { psi: 0.0, v: 0.0, omega: 0.0 });
                rec.extend([s.psi, s.v, s.omega].map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// A world with its destination and start positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCase {
    pub world: World,
    pub destination: Point,
    pub starts: Vec<Point>,
}

/// `count` seeded start positions at least `margin` inside free space.
pub fn random_starts(world: &World, x_d: &Point, count: usize, margin: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = sample_ball(&mut rng, world.dim, world.r0());
        if world.clearance(&p) >= margin && p.distance(x_d) > margin {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub oracle: bool,
    /// Relative length tolerance of a path match.
    pub match_tol: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { oracle: false, match_tol: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub world: usize,
    pub run: usize,
    /// Seed the run was integrated with; rerunning `integrate` with it reproduces the run.
    pub seed: u64,
    pub x0: Point,
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
    pub path_length: Option<f64>,
    pub min_clearance: Option<f64>,
    pub oracle_length: Option<f64>,
    pub matched: Option<bool>,
    pub rld: Option<f64>,
    pub perturbed: bool,
    pub max_lyapunov_increase: Option<f64>,
    pub max_speeds: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub world: usize,
    pub runs: usize,
    pub converged: usize,
    /// Matches over runs with an oracle length; unconverged runs count as misses.
    pub match_rate: Option<f64>,
    pub mean_rld: Option<f64>,
    pub max_rld: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub options: BatchOptions,
    pub runs: Vec<RunRecord>,
    pub worlds: Vec<WorldSummary>,
    pub safety_violations: usize,
    pub errors: usize,
    pub min_clearance: f64,
}

/// Per-run seed derived from the batch seed and the global run index.
fn run_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_one(
    case: &BatchCase,
    wi: usize,
    ri: usize,
    x0: &Point,
    config: &SimConfig,
    options: &BatchOptions,
) -> RunRecord {
    let mut rec = RunRecord {
        world: wi,
        run: ri,
        seed: config.seed,
        x0: x0.clone(),
        outcome: None,
        error: None,
        path_length: None,
        min_clearance: None,
        oracle_length: None,
        matched: None,
        rld: None,
        perturbed: false,
        max_lyapunov_increase: None,
        max_speeds: None,
    };
    match integrate(&case.world, x0, &case.destination, config) {
        Ok(tr) => {
            rec.outcome = Some(tr.outcome);
            rec.path_length = Some(tr.path_length);
            rec.min_clearance = Some(tr.min_clearance);
            rec.perturbed = tr.perturbation.is_some();
            rec.max_lyapunov_increase = Some(tr.max_lyapunov_increase);
            rec.max_speeds = tr.max_speeds;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    if options.oracle {
        match oracle_length(&case.world, x0, &case.destination) {
            Ok(l0) => {
                rec.oracle_length = Some(l0);
                // runs that never reach the destination do not match
                rec.matched = Some(false);
                if let (Some(l), Some(Outcome::Converged)) = (rec.path_length, rec.outcome) {
                    rec.matched = Some(path_match(l, l0, options.match_tol));
                    rec.rld = Some(rld(l, l0));
                }
            }
            Err(e) => {
                if rec.error.is_none() {
                    rec.error = Some(format!("oracle: {e}"));
                }
            }
        }
    }
    rec
}

/// Runs every start of every case; deterministic for a fixed `config.seed`.
pub fn batch(cases: &[BatchCase], config: &SimConfig, options: &BatchOptions) -> ExperimentReport {
    let jobs: Vec<(usize, usize, &Point)> = cases
        .iter()
        .enumerate()
        .flat_map(|(wi, c)| c.starts.iter().enumerate().map(move |(ri, p)| (wi, ri, p)))
        .collect();
    let mut runs: Vec<RunRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(g, &(wi, ri, x0))| {
            let mut cfg = config.clone();
            cfg.seed = run_seed(config.seed, g as u64);
            cfg.record_stride = 0;
            run_one(&cases[wi], wi, ri, x0, &cfg, options)
        })
        .collect();
    runs.sort_by_key(|r| (r.world, r.run));

    let worlds = (0..cases.len())
        .map(|wi| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.world == wi).collect();
            let rlds: Vec<f64> = mine.iter().filter_map(|r| r.rld).collect();
            let judged: Vec<bool> = mine.iter().filter_map(|r| r.matched).collect();
            WorldSummary {
                world: wi,
                runs: mine.len(),
                converged: mine.iter().filter(|r| r.outcome == Some(Outcome::Converged)).count(),
                match_rate: (!judged.is_empty())
                    .then(|| judged.iter().filter(|&&m| m).count() as f64 / judged.len() as f64),
                mean_rld: (!rlds.is_empty()).then(|| rlds.iter().sum::<f64>() / rlds.len() as f64),
                max_rld: rlds.iter().copied().reduce(f64::max),
            }
        })
        .collect();
    ExperimentReport {
        config: config.clone(),
        options: options.clone(),
        safety_violations: runs.iter().filter(|r| r.outcome == Some(Outcome::SafetyViolation)).count(),
        errors: runs.iter().filter(|r| r.error.is_some()).count(),
        min_clearance: runs.iter().filter_map(|r| r.min_clearance).fold(f64::INFINITY, f64::min),
        worlds,
        runs,
    }
}

/// Per-run relative length difference of `report` against `baseline`, for
/// runs that converged in both.
pub fn paired_rld(report: &ExperimentReport, baseline: &ExperimentReport) -> Vec<f64> {
    report
        .runs
        .iter()
        .zip(&baseline.runs)
        .filter(|(a, b)| {
            (a.world, a.run) == (b.world, b.run)
                && a.outcome == Some(Outcome::Converged)
                && b.outcome == Some(Outcome::Converged)
        })
        .filter_map(|(a, b)| Some(rld(a.path_length?, b.path_length?)))
        .collect()
}
