//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("form degree {degree} out of range for dimension {dim}")]
    DegreeOutOfRange { degree: usize, dim: usize },

    #[error("wedge degree overflow: {0} + {1} exceeds dimension {2}")]
    DegreeOverflow(usize, usize, usize),

    #[error("slot index {slot} invalid for tensor of rank {rank}")]
    BadSlot { slot: usize, rank: usize },

    #[error("slot variance does not match requested musical operation")]
    VarianceMismatch,

    #[error("metric is singular or not positive definite")]
    SingularMetric,

    #[error("dimension {0} outside supported range {1}..={2}")]
    UnsupportedDimension(usize, usize, usize),

    #[error("chart box is degenerate on axis {0}")]
    DegenerateBox(usize),

    #[error("point lies outside the chart box")]
    PointOutsideChart,

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },

    #[error("form vanishes at the evaluation point (|omega|_g < {0:e})")]
    VanishingForm(f64),

    #[error("normal equations ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("holomorphic input vanishes inside the chart box")]
    VanishingH,

    #[error("product conformal factor does not match -ln|H| (max deviation {0:e})")]
    FactorMismatch(f64),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
