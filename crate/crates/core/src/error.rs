use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge (value {value:.6e}, error estimate {error:.3e}): {context}")]
    Quadrature {
        value: f64,
        error: f64,
        context: String,
    },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("integrability condition violated: {0}")]
    Integrability(String),

    #[error("parameters outside the admissible window: {0}")]
    Window(String),

    #[error("error budget {budget:.3e} exceeds cap {cap:.3e}; try substeps={suggested_substeps}, t_trunc={suggested_t_trunc:.3e}")]
    Budget {
        budget: f64,
        cap: f64,
        suggested_substeps: usize,
        suggested_t_trunc: f64,
    },

    #[error("degenerate limit: {0}")]
    Degenerate(String),

    #[error("no limit theorem applies: {0}")]
    NoTheorem(String),

    #[error("inconsistent functional attributes: {0}")]
    Inconsistent(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
