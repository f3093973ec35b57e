//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file.
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// Invalid mesh connectivity (out-of-range index, degenerate face,
    /// unreferenced vertex).
    #[error("topology error: {0}")]
    Topology(String),

    /// Geometry too degenerate for the requested operation.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// A vertex is unreachable from the given source.
    #[error("disconnected mesh: vertex {unreachable} unreachable from {source_vertex}")]
    Disconnected { source_vertex: usize, unreachable: usize },

    /// Iterative eigensolver missed its residual target.
    #[error("eigensolver did not converge: {0}")]
    Convergence(String),

    /// Incompatible operand dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Linear system has no unique solution.
    #[error("singular system: {0}")]
    Singular(String),

    /// A gradient came back NaN or infinite.
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    /// Corrupt or incompatible cache/checkpoint file.
    #[error("invalid container {path}: {msg}")]
    Container { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
