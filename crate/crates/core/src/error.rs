use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch in {field}: expected {expected}, got {actual}")]
    Dimension {
        field: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },

    #[error("rank-deficient A: rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },

    #[error("ill-conditioned A*A^T: condition estimate {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("indefinite Q: smallest eigenvalue {min_eigenvalue:.6e}")]
    IndefiniteQ { min_eigenvalue: f64 },

    #[error("Q is not positive definite (smallest eigenvalue {min_eigenvalue:.6e}); the KKT oracle requires a strictly convex objective")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not symmetric: max |S - S^T| = {defect:.3e}")]
    NotSymmetric { defect: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid integration config: {0}")]
    Config(String),

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("time {t} outside interpolation range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("no subset of inequality constraints yields a feasible KKT point (problem infeasible or unbounded)")]
    Infeasible,
}
