use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or construction parameter failed validation. `field`
    /// is the dotted path of the offending value, e.g. `system.A`.
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("policy-induced chain has more than one recurrent class")]
    SingularChain,

    #[error("policy enumeration too large ({0} deterministic policies)")]
    TooLarge(u128),

    #[error("simulation budget exceeded: {requested} slot events requested, limit {limit}")]
    BudgetExceeded { requested: u128, limit: u128 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
