use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps [`Error::Invariant`] to exit code 2 and the configuration and
/// input variants to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid occupation measure: {0}")]
    InvalidMeasure(String),

    #[error("utility domain error: payoff {0} outside [0, 1]")]
    Domain(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported utility: {0}")]
    UnsupportedUtility(String),

    #[error("size cap exceeded: {what} = {size} > cap {cap}")]
    SizeCap { what: &'static str, size: u128, cap: u128 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidMeasure(_)
                | Error::Config(_)
                | Error::UnsupportedUtility(_)
                | Error::Parse(_)
                | Error::Domain(_)
                | Error::SizeCap { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e.to_string()))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
