//! Exact planar shortest paths among disjoint discs.
//!
//! The graph holds the start, the goal and every tangency point of a
//! collision-free tangent segment (point-to-disc and disc-to-disc). Boundary
//! arcs join neighbouring tangency points on each disc. Any shortest path
//! among discs is a chain of such segments and arcs, so Dijkstra on this
//! graph is exact.

use std::io::Write;

use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::geometry::{point_segment_distance, Point, Vector};
use crate::world::World;

/// Samples per edge for the collision checks on arcs.
const ARC_CHECK_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "obstacle")]
pub enum NodeKind {
    Start,
    Goal,
    TangentPoint(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub point: Point,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EdgeKind {
    Segment,
    /// Boundary arc of an obstacle; `sweep` is the signed angle from the
    /// lower-index node to the other one (counter-clockwise positive).
    Arc {
        obstacle: usize,
        sweep: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct TangentGraph {
    pub graph: UnGraph<Node, Edge>,
    pub start: NodeIndex,
    pub goal: NodeIndex,
}

impl TangentGraph {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }
}

/// One traversed edge of an oracle path, oriented along the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLeg {
    pub from: Point,
    pub to: Point,
    pub kind: EdgeKind,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePath {
    pub nodes: Vec<Node>,
    pub legs: Vec<PathLeg>,
    pub length: f64,
}

fn disc(world: &World, id: usize) -> (&Point, f64) {
    world.obstacles[id].as_disc().expect("disc world")
}

/// Points where the lines through `p` touch the circle `(c, r)`.
fn point_tangents(p: &Point, c: &Point, r: f64) -> Vec<Point> {
    let d = p.distance(c);
    if d < r {
        return Vec::new();
    }
    let base = (p - c).heading();
    let alpha = (r / d).clamp(-1.0, 1.0).acos();
    if alpha == 0.0 {
        return vec![p.clone()];
    }
    [base + alpha, base - alpha].iter().map(|&a| c.axpy(r, &Vector::polar(a))).collect()
}

/// Tangency point pairs of the outer and inner common tangents of two
/// disjoint circles.
fn bitangents(ci: &Point, ri: f64, cj: &Point, rj: f64) -> Vec<(Point, Point)> {
    let d = ci.distance(cj);
    let base = (cj - ci).heading();
    let mut out = Vec::with_capacity(4);
    if d > (ri - rj).abs() {
        let phi = ((ri - rj) / d).acos();
        for a in [base + phi, base - phi] {
            let n = Vector::polar(a);
            out.push((ci.axpy(ri, &n), cj.axpy(rj, &n)));
        }
    }
    if d > ri + rj {
        let phi = ((ri + rj) / d).acos();
        for a in [base + phi, base - phi] {
            let n = Vector::polar(a);
            out.push((ci.axpy(ri, &n), cj.axpy(-rj, &n)));
        }
    }
    out
}

fn segment_free(world: &World, a: &Point, b: &Point) -> bool {
    let tol = world.length_tol();
    world.obstacles.iter().all(|o| {
        let (c, r) = o.as_disc().expect("disc world");
        point_segment_distance(c, a, b) >= r - tol
    }) && a.norm() <= world.r0() + tol
        && b.norm() <= world.r0() + tol
}

fn arc_point(c: &Point, r: f64, angle: f64) -> Point {
    c.axpy(r, &Vector::polar(angle))
}

fn arc_free(world: &World, id: usize, from: f64, sweep: f64) -> bool {
    let (c, r) = disc(world, id);
    let tol = world.length_tol();
    (0..=ARC_CHECK_SAMPLES).all(|k| {
        let q = arc_point(c, r, from + sweep * k as f64 / ARC_CHECK_SAMPLES as f64);
        q.norm() <= world.r0() + tol
            && world.obstacles.iter().enumerate().all(|(j, o)| j == id || o.signed_distance(&q) >= -tol)
    })
}

/// Builds the tangent visibility graph of a planar disc world.
pub fn build_tvg(world: &World, x0: &Point, x_d: &Point) -> Result<TangentGraph> {
    if world.dim != 2 {
        return Err(NavError::Unsupported("the tangent graph is planar".into()));
    }
    if !world.all_discs() {
        return Err(NavError::Unsupported("the tangent graph needs disc obstacles".into()));
    }
    world.check_free(x0)?;
    world.check_free(x_d)?;

    let mut graph: UnGraph<Node, Edge> = UnGraph::new_undirected();
    let start = graph.add_node(Node { point: x0.clone(), kind: NodeKind::Start });
    let goal = graph.add_node(Node { point: x_d.clone(), kind: NodeKind::Goal });
    // tangency nodes per obstacle, with their boundary angle
    let mut on_disc: Vec<Vec<(f64, NodeIndex)>> = vec![Vec::new(); world.len()];

    let mut add_tangent = |graph: &mut UnGraph<Node, Edge>, id: usize, p: Point| {
        let (c, _) = disc(world, id);
        let angle = (&p - c).heading();
        let idx = graph.add_node(Node { point: p, kind: NodeKind::TangentPoint(id) });
        on_disc[id].push((angle, idx));
        idx
    };

    if segment_free(world, x0, x_d) {
        graph.add_edge(start, goal, Edge { kind: EdgeKind::Segment, length: x0.distance(x_d) });
    }
    for (terminal, p) in [(start, x0), (goal, x_d)] {
        for id in 0..world.len() {
            let (c, r) = disc(world, id);
            for t in point_tangents(p, c, r) {
                if segment_free(world, p, &t) {
                    let length = p.distance(&t);
                    let idx = add_tangent(&mut graph, id, t);
                    graph.add_edge(terminal, idx, Edge { kind: EdgeKind::Segment, length });
                }
            }
        }
    }

    let pairs: Vec<(usize, usize)> =
        (0..world.len()).flat_map(|i| ((i + 1)..world.len()).map(move |j| (i, j))).collect();
    let segments: Vec<(usize, usize, Point, Point)> = pairs
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let (ci, ri) = disc(world, i);
            let (cj, rj) = disc(world, j);
            bitangents(ci, ri, cj, rj)
                .into_iter()
                .filter(|(a, b)| segment_free(world, a, b))
                .map(move |(a, b)| (i, j, a, b))
        })
        .collect();
    for (i, j, a, b) in segments {
        let length = a.distance(&b);
        let ia = add_tangent(&mut graph, i, a);
        let ib = add_tangent(&mut graph, j, b);
        graph.add_edge(ia, ib, Edge { kind: EdgeKind::Segment, length });
    }

    for (id, nodes) in on_disc.iter_mut().enumerate() {
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (_, r) = disc(world, id);
        let k = nodes.len();
        if k < 2 {
            continue;
        }
        // neighbouring nodes in angle order; longer arcs are chains of these
        for s in 0..k {
            let (a0, n0) = nodes[s];
            let (a1, n1) = nodes[(s + 1) % k];
            let mut sweep = a1 - a0;
            if s + 1 == k {
                sweep += std::f64::consts::TAU;
            }
            if arc_free(world, id, a0, sweep) {
                let (lo, signed) = if n0.index() <= n1.index() { (n0, sweep) } else { (n1, -sweep) };
                let hi = if lo == n0 { n1 } else { n0 };
                graph.add_edge(lo, hi, Edge { kind: EdgeKind::Arc { obstacle: id, sweep: signed }, length: r * sweep });
            }
        }
    }
    Ok(TangentGraph { graph, start, goal })
}

/// Dijkstra from start to goal.
pub fn shortest_path(tvg: &TangentGraph) -> Result<OraclePath> {
    let (length, route) =
        petgraph::algo::astar(&tvg.graph, tvg.start, |n| n == tvg.goal, |e| e.weight().length, |_| 0.0)
            .ok_or(NavError::Unreachable)?;
    let mut legs = Vec::with_capacity(route.len().saturating_sub(1));
    for w in route.windows(2) {
        let (a, b) = (w[0], w[1]);
        // cheapest of any parallel edges
        let edge = tvg
            .graph
            .edges_connecting(a, b)
            .map(|e| *e.weight())
            .min_by(|x, y| x.length.total_cmp(&y.length))
            .expect("edge on route");
        let kind = match edge.kind {
            EdgeKind::Arc { obstacle, sweep } if a.index() > b.index() => EdgeKind::Arc { obstacle, sweep: -sweep },
            k => k,
        };
        legs.push(PathLeg {
            from: tvg.graph[a].point.clone(),
            to: tvg.graph[b].point.clone(),
            kind,
            length: edge.length,
        });
    }
    Ok(OraclePath { nodes: route.iter().map(|&n| tvg.graph[n].clone()).collect(), legs, length })
}

/// Shortest collision-free path length from `x0` to `x_d`.
pub fn oracle_length(world: &World, x0: &Point, x_d: &Point) -> Result<f64> {
    Ok(shortest_path(&build_tvg(world, x0, x_d)?)?.length)
}

impl OraclePath {
    /// Dense polyline along the path; arcs are sampled every `max_step` of length.
    pub fn polyline(&self, world: &World, max_step: f64) -> Vec<(Point, &'static str)> {
        let mut out = Vec::new();
        if let Some(first) = self.nodes.first() {
            out.push((first.point.clone(), "start"));
        }
        for leg in &self.legs {
            match leg.kind {
                EdgeKind::Segment => out.push((leg.to.clone(), "segment")),
                EdgeKind::Arc { obstacle, sweep } => {
                    let (c, r) = disc(world, obstacle);
                    let from = (&leg.from - c).heading();
                    let steps = ((leg.length / max_step).ceil() as usize).max(1);
                    for k in 1..=steps {
                        out.push((arc_point(c, r, from + sweep * k as f64 / steps as f64), "arc"));
                    }
                }
            }
        }
        out
    }

    /// CSV export with columns `t,x1,x2,kind`, where `t` is arc length.
    pub fn write_csv<W: Write>(&self, world: &World, max_step: f64, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x1", "x2", "kind"])?;
        let mut s = 0.0;
        let mut prev: Option<Point> = None;
        for (p, kind) in self.polyline(world, max_step) {
            if let Some(q) = &prev {
                s += q.distance(&p);
            }
            w.write_record([s.to_string(), p[0].to_string(), p[1].to_string(), kind.to_string()])?;
            prev = Some(p);
        }
        w.flush()
    }
}

/// Relative length difference in percent.
pub fn rld(length: f64, reference: f64) -> f64 {
    100.0 * (length - reference) / reference
}

/// A path matches the reference when it is at most `rel_tol` longer.
pub fn path_match(length: f64, reference: f64, rel_tol: f64) -> bool {
    (length - reference) / reference <= rel_tol
}
