use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("invalid boundary condition: {0}")]
    InvalidBoundary(String),

    #[error("invalid kinetics: {0}")]
    InvalidKinetics(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failed at s = {s:.6e} (step {step:.3e}): {reason}")]
    Integration { s: f64, step: f64, reason: String },

    #[error("no eigenvalue bracket for n = {n} below lambda_cap = {cap}; raise lambda_cap")]
    BracketNotFound { n: usize, cap: f64 },

    #[error("eigenfunction for n = {expected} has {found} interior sign changes")]
    NodalMismatch { expected: usize, found: usize },

    #[error("linear system is singular (pivot {pivot:.3e} in column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("newton did not converge: {0}")]
    NoConvergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
