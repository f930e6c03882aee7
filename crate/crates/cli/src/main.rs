//! `conenav`: validate worlds, simulate the navigation laws, run batch
//! experiments against the shortest-path oracle, analyse equilibria and plot.
//!
//! Exit codes: 0 success, 1 invalid world or input, 2 runtime failure, 3 usage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use conenav::controller_map::ControlParams;
use conenav::controller_sensor::LidarSpec;
use conenav::equilibria::{equilibrium_report, undesired_segments_sensor};
use conenav::simulator::{batch, integrate, random_starts, BatchCase, BatchOptions, ControllerKind, SimConfig};
use conenav::tvg::{oracle_length, rld};
use conenav::world::{random_world, RandomWorldSpec};
use conenav::{Point, Vector};
use conenav_cli::plot::{read_trajectory_csv, render, Layer, PlotSpec};
use conenav_cli::worldfile::{InvalidWorld, WorldFile};
use conenav_cli::write_atomic;
use serde_json::json;

#[derive(Parser)]
#[command(name = "conenav", version, about = "Cone-projection feedback navigation among obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a world file against the navigation assumptions; prints the report as JSON.
    Validate { world: PathBuf },
    /// Simulate one run; writes the trajectory CSV and prints a JSON summary.
    Run(RunArgs),
    /// Simulate many runs; writes the experiment report JSON and prints a match-rate table.
    Batch(BatchArgs),
    /// Equilibrium segments, exemptions and the Assumption 3 verdict as JSON.
    Analyze(AnalyzeArgs),
    /// Render a world and optional overlays as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    /// Map-based law over all obstacles (disc worlds).
    Map,
    /// Law that avoids only the obstacle given by --obstacle.
    Single,
    /// Sensor-based law driven by simulated range scans.
    Sensor,
    /// Sensor-based law tracked by a unicycle.
    Unicycle,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, value_enum, default_value = "map")]
    controller: Controller,
    /// Feedback gain.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Stopping radius around the destination.
    #[arg(long, default_value_t = 1e-3)]
    ec: f64,
    /// Integration step [default: 1e-3 / gamma].
    #[arg(long)]
    step: Option<f64>,
    /// Time limit [default: 50 / gamma].
    #[arg(long)]
    tmax: Option<f64>,
    /// Seed of every random draw (noise, perturbations, batch starts).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LiDAR angular resolution in degrees.
    #[arg(long, default_value_t = 1.0)]
    lidar_res: f64,
    /// LiDAR maximum range.
    #[arg(long, default_value_t = 3.4)]
    lidar_range: f64,
    /// Standard deviation of the range noise.
    #[arg(long, default_value_t = 0.0)]
    lidar_noise: f64,
    /// Distance the sensor law keeps from every detected return.
    #[arg(long, default_value_t = 0.0)]
    range_margin: f64,
    /// Kick the state once when it stalls on an equilibrium.
    #[arg(long)]
    perturb: bool,
    /// Obstacle index for the single-obstacle law.
    #[arg(long, default_value_t = 0)]
    obstacle: usize,
    /// Initial heading of the unicycle in radians.
    #[arg(long, default_value_t = 0.0)]
    heading: f64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let control = ControlParams { gamma: self.gamma, e_c: self.ec, ..ControlParams::default() };
        SimConfig {
            step: self.step.unwrap_or(1e-3 / self.gamma),
            t_max: self.tmax.unwrap_or(50.0 / self.gamma),
            controller: match self.controller {
                Controller::Map => ControllerKind::Map,
                Controller::Single => ControllerKind::SingleObstacle,
                Controller::Sensor => ControllerKind::Sensor,
                Controller::Unicycle => ControllerKind::UnicycleSensor,
            },
            control,
            lidar: LidarSpec {
                resolution_deg: self.lidar_res,
                range: self.lidar_range,
                noise_sigma: self.lidar_noise,
                ..LidarSpec::default()
            },
            range_margin: self.range_margin,
            obstacle: self.obstacle,
            initial_heading: self.heading,
            perturb_on_stall: self.perturb,
            seed: self.seed,
            ..SimConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    world: PathBuf,
    /// Start position, comma separated.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    x0: Point,
    /// Trajectory CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Keep every k-th state in the CSV.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Compare the path length with the shortest path (disc worlds).
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory of world files (every *.json, in name order).
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    worlds: Option<PathBuf>,
    /// Generate random disc worlds with this many obstacles.
    #[arg(long)]
    random: Option<usize>,
    /// Number of random worlds; world k uses seed `--seed + k`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Workspace radius of random worlds.
    #[arg(long, default_value_t = 10.0)]
    r0: f64,
    /// Smallest and largest obstacle radius of random worlds.
    #[arg(long, num_args = 2, default_values_t = [0.5, 1.5])]
    radii: Vec<f64>,
    /// Minimum gap between random obstacles.
    #[arg(long, default_value_t = 0.2)]
    separation: f64,
    /// Random start positions per world.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    /// Compare every run with the shortest path (disc worlds).
    #[arg(long)]
    oracle: bool,
    /// Relative length tolerance of a match.
    #[arg(long, default_value_t = 0.005)]
    match_tol: f64,
    /// Report JSON output.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    world: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sensing range for non-disc worlds (sensor-law equilibria).
    #[arg(long, default_value_t = 3.4)]
    lidar_range: f64,
}

#[derive(Args)]
struct PlotArgs {
    world: PathBuf,
    /// SVG output.
    #[arg(long)]
    out: PathBuf,
    /// Layers to draw, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "world")]
    layers: Vec<Layer>,
    /// Trajectory CSV files to overlay (trajectories layer).
    #[arg(long = "trajectory")]
    trajectories: Vec<PathBuf>,
    /// Start of the shortest path (oracle_path layer).
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    oracle_from: Option<Point>,
    /// Sensor position (scan layer).
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    scan_at: Option<Point>,
    #[arg(long, default_value_t = 1.0)]
    lidar_res: f64,
    #[arg(long, default_value_t = 3.4)]
    lidar_range: f64,
    #[arg(long, default_value_t = 0.0)]
    lidar_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 800)]
    size: u32,
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let coords: std::result::Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
    match coords {
        Ok(c) if c.len() >= 2 && c.iter().all(|v| v.is_finite()) => Ok(Vector::from(c)),
        _ => Err(format!("expected comma-separated coordinates, got {s:?}")),
    }
}

/// Failure of a validation step (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Rejected(String);

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn cmd_validate(path: &Path) -> Result<()> {
    let file = WorldFile::read(path)?;
    let report = file.report()?;
    print!("{}", to_json(&report)?);
    if !report.ok {
        return Err(Rejected(format!("{} violation(s)", report.violations.len())).into());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let file = WorldFile::read(&args.world)?;
    let world = file.valid_world()?;
    if args.x0.dim() != world.dim {
        return Err(Rejected(format!("x0 has {} coordinates, world has n = {}", args.x0.dim(), world.dim)).into());
    }
    let config = SimConfig { record_stride: args.stride.max(1), ..args.sim.config() };
    config.validate(&world).map_err(|e| Rejected(e.to_string()))?;
    world.check_free(&args.x0).map_err(|e| Rejected(format!("x0: {e}")))?;
    let tr = integrate(&world, &args.x0, &file.destination, &config)?;
    let mut csv = Vec::new();
    tr.write_csv(&mut csv)?;
    write_atomic(&args.out, &csv)?;

    let remaining = tr.final_state.distance(&file.destination);
    let mut summary = json!({
        "outcome": tr.outcome,
        "path_length": tr.path_length,
        "completed_length": tr.path_length + remaining,
        "min_clearance": tr.min_clearance,
        "final_state": tr.final_state,
        "final_time": tr.final_time,
        "steps": tr.steps,
        "max_lyapunov_increase": tr.max_lyapunov_increase,
        "perturbation": tr.perturbation,
        "max_speeds": tr.max_speeds,
        "euler_fallbacks": tr.euler_fallbacks,
        "config": config,
    });
    if args.oracle {
        let l0 = oracle_length(&world, &args.x0, &file.destination)?;
        summary["oracle_length"] = json!(l0);
        summary["rld"] = json!(rld(tr.path_length + remaining, l0));
    }
    let text = to_json(&summary)?;
    if let Some(p) = &args.summary {
        write_atomic(p, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn batch_cases(args: &BatchArgs) -> Result<Vec<BatchCase>> {
    let start_seed = |k: u64| args.sim.seed.wrapping_add(0x5EED_0000).wrapping_add(k);
    if let Some(m) = args.random {
        if args.radii.len() != 2 || !(args.radii[0] > 0.0 && args.radii[0] <= args.radii[1]) {
            return Err(Rejected("--radii needs 0 < min <= max".into()).into());
        }
        let destination = Vector::new2(0.0, 0.0);
        return (0..args.seeds)
            .map(|k| {
                let spec = RandomWorldSpec {
                    seed: args.sim.seed.wrapping_add(k),
                    m,
                    n: 2,
                    r0: args.r0,
                    min_separation: args.separation,
                    radius_range: (args.radii[0], args.radii[1]),
                    keep_clear: vec![destination.clone()],
                };
                let world = random_world(&spec).map_err(|e| Rejected(e.to_string()))?;
                let starts = random_starts(&world, &destination, args.starts, 0.05, start_seed(k));
                Ok(BatchCase { world, destination: destination.clone(), starts })
            })
            .collect();
    }
    let dir = args.worlds.as_ref().expect("clap requires --worlds or --random");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Rejected(format!("no world files in {}", dir.display())).into());
    }
    files
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let file = WorldFile::read(p)?;
            let world = file.valid_world().map_err(|e| Rejected(format!("{}: {e}", p.display())))?;
            let starts = random_starts(&world, &file.destination, args.starts, 0.05, start_seed(k as u64));
            Ok(BatchCase { world, destination: file.destination, starts })
        })
        .collect()
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v))
}

/// Relative length differences are already percentages.
fn fmt_rld(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3}%"))
}

fn cmd_batch(args: &BatchArgs) -> Result<()> {
    let cases = batch_cases(args)?;
    let config = SimConfig { record_stride: 0, ..args.sim.config() };
    for c in &cases {
        config.validate(&c.world).map_err(|e| Rejected(e.to_string()))?;
    }
    let options = BatchOptions { oracle: args.oracle, match_tol: args.match_tol };
    let report = batch(&cases, &config, &options);
    write_atomic(&args.out, to_json(&report)?.as_bytes())?;
    println!("{:>5} {:>6} {:>9} {:>8} {:>9} {:>9}", "world", "runs", "converged", "match", "mean_rld", "max_rld");
    for w in &report.worlds {
        println!(
            "{:>5} {:>6} {:>9} {:>8} {:>9} {:>9}",
            w.world,
            w.runs,
            w.converged,
            fmt_rate(w.match_rate),
            fmt_rld(w.mean_rld),
            fmt_rld(w.max_rld)
        );
    }
    println!(
        "safety violations {}, errors {}, min clearance {:.3e}",
        report.safety_violations, report.errors, report.min_clearance
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let file = WorldFile::read(&args.world)?;
    let world = file.valid_world()?;
    let report = if world.all_discs() {
        json!(equilibrium_report(&world, &file.destination, &ControlParams::default())?)
    } else {
        // convex worlds only admit the sensor law
        let lines = undesired_segments_sensor(&world, &file.destination, args.lidar_range)?;
        json!(lines
            .into_iter()
            .map(|l| json!({ "obstacle_id": l.obstacle, "segments": l.segments }))
            .collect::<Vec<_>>())
    };
    let text = to_json(&report)?;
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let file = WorldFile::read(&args.world)?;
    let world = file.valid_world()?;
    let trajectories = args
        .trajectories
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            read_trajectory_csv(&text).map_err(|e| Rejected(format!("{}: {e}", p.display())).into())
        })
        .collect::<Result<Vec<_>>>()?;
    if args.layers.contains(&Layer::Trajectories) && trajectories.is_empty() {
        bail!(Rejected("the trajectories layer needs --trajectory files".into()));
    }
    let spec = PlotSpec {
        layers: args.layers.clone(),
        size_px: args.size,
        trajectories,
        oracle_from: args.oracle_from.clone(),
        scan_at: args.scan_at.clone(),
        lidar: LidarSpec {
            resolution_deg: args.lidar_res,
            range: args.lidar_range,
            noise_sigma: args.lidar_noise,
            ..LidarSpec::default()
        },
        seed: args.seed,
    };
    let svg = render(&world, &file.destination, &spec)?;
    write_atomic(&args.out, svg.as_bytes())
}

fn diagnostic(kind: &str, message: &str) {
    eprintln!("{}", json!({ "kind": kind, "error": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            diagnostic("usage", e.render().to_string().trim());
            return ExitCode::from(3);
        }
    };
    let result = match &cli.command {
        Command::Validate { world } => cmd_validate(world),
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Rejected>() || e.is::<InvalidWorld>() => {
            diagnostic("validation", &format!("{e:#}"));
            ExitCode::from(1)
        }
        Err(e) => {
            diagnostic("runtime", &format!("{e:#}"));
            ExitCode::from(2)
        }
    }
}
