use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported dimension q = {0} (need q >= 2)")]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },

    #[error("integrand is not finite ({value}) at abscissa {abscissa:?}")]
    NonFiniteIntegrand { abscissa: Vec<f64>, value: f64 },

    #[error("{what} did not converge after {iterations} iterations: {detail}")]
    Convergence { what: &'static str, iterations: usize, detail: String },

    #[error("design matrix is rank deficient: {0}")]
    Design(String),

    #[error("fit diverged (possible complete separation): max |coefficient| = {max_abs_coef:.3e}")]
    Separation { max_abs_coef: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("too many failed replicates: {failed} of {attempted}")]
    TooManyFailures { failed: usize, attempted: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_)
            | Error::UnsupportedDimension(_)
            | Error::Argument(_)
            | Error::DimensionMismatch { .. } => ErrorKind::Config,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Design(_) => ErrorKind::Data,
            Error::NonFiniteIntegrand { .. }
            | Error::Convergence { .. }
            | Error::Separation { .. }
            | Error::Numerical(_)
            | Error::TooManyFailures { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
