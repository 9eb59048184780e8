//! Error types shared across the simulator.

use thiserror::Error;

/// Unified error type for simulator construction, stepping, and I/O.
#[derive(Debug, Error)]
pub enum SimError {
    /// A box specification violates a physical or gripper constraint.
    #[error("invalid box: {0}")]
    InvalidBox(String),

    /// A configuration value or combination is rejected.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The initial grasp could not be established.
    #[error("grasp failed: {0}")]
    GraspFailed(String),

    /// A commanded state drives the contact model outside its validity bound
    /// (e.g. a corner pressed through the surface beyond the penetration bound).
    #[error("inconsistent contact constraint: {0}")]
    InconsistentConstraint(String),

    /// A step command violates its preconditions (e.g. non-positive dt).
    #[error("invalid command: {0}")]
    InvalidCommand(String),

    /// File I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    /// Attach path context to an I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type SimResult<T> = Result<T, SimError>;
