//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry the offending
//! field name and value so callers (and the CLI error object) can report
//! precisely what was rejected.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A rate-like quantity (R, C, or an allocation entry) was negative.
    #[error("negative rate: {name} = {value}")]
    NegativeRate { name: &'static str, value: f64 },

    /// A variance was negative.
    #[error("negative variance: {name} = {value}")]
    NegativeVariance { name: &'static str, value: f64 },

    /// A perception or distortion budget was negative.
    #[error("negative budget: {name} = {value}")]
    NegativeBudget { name: &'static str, value: f64 },

    /// NaN, or an infinity where a finite value is required.
    #[error("non-finite input: {name} = {value}")]
    NonFiniteInput { name: &'static str, value: f64 },

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {what}")]
    Domain { what: String },

    /// Vector lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Waterfilling over a spectrum with no positive component.
    #[error("all-zero spectrum: every component variance is 0")]
    AllZeroSpectrum,

    /// Grid search would enumerate more cells than the configured budget.
    #[error("grid too large: {cells} cells exceed budget {budget}")]
    TooManyCells { cells: u128, budget: u64 },

    /// An iterative routine failed to reach its tolerance.
    #[error("convergence failure: {what}")]
    ConvergenceFailure { what: String },

    /// Paired-sample statistics on slices of unequal length.
    #[error("unequal sample counts: {left} vs {right}")]
    UnequalCounts { left: usize, right: usize },

    /// An empty slice where at least one sample is required.
    #[error("empty input: {name}")]
    EmptyInput { name: &'static str },

    /// A covariance matrix failed the symmetry check.
    #[error("covariance not symmetric at ({row},{col}): {delta} exceeds tolerance")]
    NotSymmetric { row: usize, col: usize, delta: f64 },

    /// A covariance matrix had an eigenvalue below the clipping tolerance.
    #[error("covariance not positive semidefinite: eigenvalue {eigenvalue}")]
    NotPsd { eigenvalue: f64 },

    /// A jointly Gaussian coupling whose 2x2 covariance is not PSD.
    #[error("coupling not PSD: theta^2 = {theta_sq} exceeds gamma*gamma_tilde = {bound}")]
    CouplingNotPsd { theta_sq: f64, bound: f64 },

    /// Codebook size over the configured budget; names the limiting parameter.
    #[error("codeword budget exceeded by {limiting}: {codewords} > {budget}")]
    BudgetExceeded {
        limiting: &'static str,
        codewords: u128,
        budget: u64,
    },

    /// A malformed run configuration.
    #[error("invalid config: {what}")]
    InvalidConfig { what: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeRate { .. } => "negative_rate",
            Error::NegativeVariance { .. } => "negative_variance",
            Error::NegativeBudget { .. } => "negative_budget",
            Error::NonFiniteInput { .. } => "non_finite_input",
            Error::Domain { .. } => "domain",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::AllZeroSpectrum => "all_zero_spectrum",
            Error::TooManyCells { .. } => "too_many_cells",
            Error::ConvergenceFailure { .. } => "convergence_failure",
            Error::UnequalCounts { .. } => "unequal_counts",
            Error::EmptyInput { .. } => "empty_input",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotPsd { .. } => "not_psd",
            Error::CouplingNotPsd { .. } => "coupling_not_psd",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
