use thiserror::Error;

/// Errors produced by the navigation library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum NavError {
    #[error("expected a unit vector, got norm {norm}")]
    NonUnitVector { norm: f64 },

    #[error("zero vector where a direction is required")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies inside obstacle {id}")]
    InsideObstacle { id: usize },

    #[error("point lies outside the workspace")]
    OutsideWorkspace,

    #[error("control direction outside the cone of obstacle {id}: beta {beta} > theta {theta}")]
    OutsideConeRegion { id: usize, beta: f64, theta: f64 },

    #[error("successive projections exceeded max depth {max_depth} (sequence {sequence:?})")]
    ProjectionCycle { max_depth: usize, sequence: Vec<usize> },

    #[error("could not place obstacle {index} after {attempts} rejections")]
    InfeasiblePacking { index: usize, attempts: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("goal unreachable in the tangent graph")]
    Unreachable,
}

pub type Result<T, E = NavError> = std::result::Result<T, E>;
