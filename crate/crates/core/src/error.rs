use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its invariants.
    #[error("invalid config: `{field}` {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The stationarity function of UE `n` changes sign more than once on
    /// the safeguard grid, so bisection has no unique root to converge to.
    #[error("stationarity function for UE {n} is not monotone ({sign_changes} sign changes on the safeguard grid)")]
    NonBracketing { n: usize, sign_changes: usize },

    #[error("could not bracket the root of {what} after {doublings} doublings")]
    BracketExhausted { what: &'static str, doublings: u32 },

    /// The surrogate edge budget stays violated for every multiplier tried.
    #[error("edge budget cannot be met: residual {residual:e} at delta = {delta_hi:e}")]
    InfeasibleBudget { residual: f64, delta_hi: f64 },

    #[error("non-finite objective at outer iteration {outer}, inner iteration {inner}")]
    NonFinite { outer: usize, inner: usize },

    #[error("brute force is limited to N <= {max}, got N = {n}")]
    OracleTooLarge { n: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-friendly tag used in status columns.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig { .. } => "invalid-config",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonBracketing { .. } => "non-bracketing",
            Error::BracketExhausted { .. } => "bracket-exhausted",
            Error::InfeasibleBudget { .. } => "infeasible-budget",
            Error::NonFinite { .. } => "non-finite",
            Error::OracleTooLarge { .. } => "oracle-too-large",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
