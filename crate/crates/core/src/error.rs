use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Mismatched dimensions or malformed structure.
    #[error("structural error: {0}")]
    Dimension(String),

    /// A configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Invalid(String),

    /// The requested surrogate or constraint model needs data the problem does not carry.
    #[error("missing evaluator: {0}")]
    MissingEvaluator(String),

    /// A quantity was requested outside its domain of definition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A mathematical invariant the algorithm relies on does not hold.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    /// An inner iterative solver stopped before reaching its tolerance.
    #[error("{what} did not converge: residual {residual:.3e} after {iterations} iterations")]
    Convergence {
        what: String,
        residual: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
