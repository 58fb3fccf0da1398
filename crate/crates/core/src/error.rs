//! Shared error type for the simple failure modes.
//!
//! The optimizer has its own error enum carrying the Dinkelbach trace; see
//! [`crate::optimizer::OptimizeError`].

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate zero profile: variance and energy both vanish")]
    DegenerateProfile,

    #[error("unbounded sensing EE: positive variance at zero energy")]
    UnboundedEe,

    #[error("zero position variance yields an infinite CRB")]
    InfiniteCrb,

    #[error("monomial power {power} out of range for Gram dimension {dim}")]
    GramIndex { power: i64, dim: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),
}
