use thiserror::Error;

/// Errors produced by the identification pipeline.
#[derive(Debug, Error)]
pub enum IdentError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// Shapes, grid sizes or index ranges do not line up.
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// A field carries significant energy where the declared support says it must vanish.
    #[error("inconsistent field: {0}")]
    Inconsistent(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("enumerating {needed} subsets exceeds the budget of {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("no support with at most {kmax} cells fits the data (best relative residual {best_residual:e})")]
    Infeasible { kmax: usize, best_residual: f64 },

    #[error("correlation matrix has rank {0}, leaving no noise subspace")]
    NoNoiseSubspace(usize),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("no spark-certified coefficient vector found in {0} attempts")]
    Generation(usize),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IdentError>;
