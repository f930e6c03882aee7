//! Cone-projection feedback navigation in sphere worlds and planar convex
//! worlds, with a tangent-visibility-graph shortest-path oracle.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Obstacles are addressed by index throughout.
#![allow(clippy::needless_range_loop)]

pub mod controller_map;
pub mod controller_sensor;
pub mod equilibria;
pub mod error;
pub mod geometry;
pub mod simulator;
pub mod tvg;
pub mod visibility;
pub mod world;

pub use error::{NavError, Result};
pub use geometry::{Point, Vector};
pub use world::{Obstacle, World};
