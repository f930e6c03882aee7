//! SVG rendering of worlds, shadow regions, trajectories, oracle paths,
//! equilibrium lines and range scans.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use conenav::controller_map::ControlParams;
use conenav::controller_sensor::{arc_list, scan, LidarSpec};
use conenav::equilibria::{equilibrium_report, undesired_segments_sensor};
use conenav::tvg::{build_tvg, shortest_path};
use conenav::{Point, Vector, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Layer {
    World,
    Shadows,
    Trajectories,
    OraclePath,
    EquilibriumLines,
    Scan,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub layers: Vec<Layer>,
    pub size_px: u32,
    pub trajectories: Vec<Vec<Point>>,
    /// Start of the oracle path.
    pub oracle_from: Option<Point>,
    /// Sensor position of the scan layer.
    pub scan_at: Option<Point>,
    pub lidar: LidarSpec,
    pub seed: u64,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];
const BOUNDARY_SAMPLES: usize = 720;

/// Maps world coordinates to pixels with the y axis pointing up.
struct Frame {
    r0: f64,
    size: f64,
}

impl Frame {
    fn px(&self, p: &Point) -> (f64, f64) {
        let s = self.size / (2.0 * self.r0);
        ((p[0] + self.r0) * s, (self.r0 - p[1]) * s)
    }

    fn len(&self, l: f64) -> f64 {
        l * self.size / (2.0 * self.r0)
    }

    fn points(&self, pts: &[Point]) -> String {
        let mut out = String::new();
        for p in pts {
            let (x, y) = self.px(p);
            let _ = write!(out, "{x:.3},{y:.3} ");
        }
        out.trim_end().to_string()
    }
}

/// Renders the requested layers in a fixed order (regions below curves).
pub fn render(world: &World, destination: &Point, spec: &PlotSpec) -> Result<String> {
    if world.dim != 2 {
        bail!("plots need a planar world (n = {})", world.dim);
    }
    if spec.layers.is_empty() {
        bail!("a plot needs at least one layer");
    }
    let f = Frame { r0: world.r0(), size: spec.size_px as f64 };
    let has = |l: Layer| spec.layers.contains(&l);
    let mut svg = String::new();
    let size = spec.size_px;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let (cx, cy) = f.px(&Vector::new2(0.0, 0.0));
    let rw = f.len(world.r0());
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="workspace"><circle cx="{cx:.3}" cy="{cy:.3}" r="{rw:.3}"/></clipPath></defs>"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    if has(Layer::Shadows) {
        let _ = writeln!(svg, r##"<g clip-path="url(#workspace)" fill="#bbbbbb" fill-opacity="0.45" stroke="none">"##);
        for o in &world.obstacles {
            if let Some(poly) = shadow_polygon(&o.boundary_samples(BOUNDARY_SAMPLES), destination, 3.0 * world.r0()) {
                let _ = writeln!(svg, r#"<polygon points="{}"/>"#, f.points(&poly));
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    if has(Layer::World) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{rw:.3}" fill="none" stroke="black" stroke-width="2"/>"#
        );
        let _ = writeln!(svg, r##"<g fill="#555555" stroke="black" stroke-width="1">"##);
        for o in &world.obstacles {
            match o.as_disc() {
                Some((c, r)) => {
                    let (x, y) = f.px(c);
                    let _ = writeln!(svg, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}"/>"#, f.len(r));
                }
                None => {
                    let _ = writeln!(svg, r#"<polygon points="{}"/>"#, f.points(&o.boundary_samples(BOUNDARY_SAMPLES)));
                }
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    if has(Layer::EquilibriumLines) {
        let segments: Vec<(Point, Point)> = if world.all_discs() {
            equilibrium_report(world, destination, &ControlParams::default())?
                .into_iter()
                .flat_map(|e| e.segments)
                .collect()
        } else {
            undesired_segments_sensor(world, destination, spec.lidar.range)?
                .into_iter()
                .flat_map(|l| l.segments)
                .collect()
        };
        let _ = writeln!(svg, r##"<g stroke="#d62728" stroke-width="2" stroke-dasharray="6 3">"##);
        for (a, b) in &segments {
            let ((x1, y1), (x2, y2)) = (f.px(a), f.px(b));
            let _ = writeln!(svg, r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }
    if has(Layer::Scan) {
        let Some(at) = &spec.scan_at else { bail!("the scan layer needs a sensor position") };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let s = scan(at, world, &spec.lidar, &mut rng)?;
        let arcs = arc_list(&s);
        let (ox, oy) = f.px(at);
        let _ = writeln!(svg, r#"<g stroke-width="0.6">"#);
        for k in 0..s.len() {
            let colour =
                arcs.arcs.iter().position(|a| a.contains(k, s.len())).map_or("#cccccc", |i| PALETTE[i % PALETTE.len()]);
            let (x, y) = f.px(&s.point(k));
            let _ = writeln!(svg, r#"<line x1="{ox:.3}" y1="{oy:.3}" x2="{x:.3}" y2="{y:.3}" stroke="{colour}"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }
    if has(Layer::OraclePath) {
        let Some(from) = &spec.oracle_from else { bail!("the oracle_path layer needs a start position") };
        let path = shortest_path(&build_tvg(world, from, destination)?)?;
        let pts: Vec<Point> = path.polyline(world, world.r0() * 1e-2).into_iter().map(|(p, _)| p).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="3 3"/>"#,
            f.points(&pts)
        );
    }
    if has(Layer::Trajectories) {
        for (i, t) in spec.trajectories.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let _ =
                writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, f.points(t));
            if let Some(p) = t.first() {
                let (x, y) = f.px(p);
                let _ = writeln!(svg, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="{colour}"/>"#);
            }
        }
    }
    if has(Layer::World) {
        let (x, y) = f.px(destination);
        let _ = writeln!(
            svg,
            r##"<path d="M {:.3} {y:.3} L {x:.3} {:.3} L {:.3} {y:.3} L {x:.3} {:.3} Z" fill="#2ca02c" stroke="black"/>"##,
            x - 7.0,
            y - 7.0,
            x + 7.0,
            y + 7.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Region hidden from `x_d` by a convex obstacle sampled by `boundary`: the
/// two extreme bearings seen from `x_d` continued out to `far`.
fn shadow_polygon(boundary: &[Point], x_d: &Point, far: f64) -> Option<Vec<Point>> {
    let centre = boundary.iter().fold(Vector::new2(0.0, 0.0), |acc, p| &acc + p) * (1.0 / boundary.len() as f64);
    let base = (&centre - x_d).normalized()?;
    let bearing = |p: &Point| {
        let d = p - x_d;
        base.cross2(&d).atan2(base.dot(&d))
    };
    let lo = boundary.iter().min_by(|a, b| bearing(a).total_cmp(&bearing(b)))?;
    let hi = boundary.iter().max_by(|a, b| bearing(a).total_cmp(&bearing(b)))?;
    let ray = |p: &Point| p.axpy(far, &(p - x_d).normalized().unwrap_or_else(|| base.clone()));
    Some(vec![lo.clone(), ray(lo), ray(&centre), ray(hi), hi.clone(), centre])
}

/// Planar positions from a trajectory CSV (`x1`, `x2` columns).
pub fn read_trajectory_csv(text: &str) -> Result<Vec<Point>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ix), Some(iy)) = (col("x1"), col("x2")) else { bail!("trajectory CSV needs x1 and x2 columns") };
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(Vector::new2(rec[ix].parse()?, rec[iy].parse()?));
    }
    Ok(out)
}
