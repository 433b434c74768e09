use thiserror::Error;

/// Errors produced by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: error bound {bound:.3e} exceeds budget {budget:.3e}")]
    Quadrature { bound: f64, budget: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix is not positive semi-definite: {0}")]
    Indefinite(String),

    #[error("M-matrix condition violated: {0}")]
    NotMMatrix(String),

    #[error("input is not excessive: {0}")]
    NotExcessive(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("expression parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("simulation aborted: {0}")]
    Simulation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { key: key.into(), msg: msg.into() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json reports unknown/missing fields with the key name in the message
        Error::Config { key: format!("line {} column {}", e.line(), e.column()), msg: e.to_string() }
    }
}
