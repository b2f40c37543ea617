use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The CLI maps these to exit codes: precondition and model errors exit with
/// 2, solver non-convergence with 3 and consistency rejections with 4.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("enumeration refused: estimated {estimated} states exceeds ceiling {ceiling}")]
    EnumerationRefused { estimated: u128, ceiling: u128 },

    #[error("tail sum not certifiable: {0}")]
    TailNotCertifiable(String),

    #[error("solver did not converge (last residuals {0:?})")]
    NonConvergence(Vec<f64>),

    #[error("input not realizable as a model free energy: violated {inequality}")]
    ConsistencyRejected { inequality: String },

    #[error("root search failed: {0}")]
    NoRoot(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
