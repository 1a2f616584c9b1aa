use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("argument outside the domain of {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("a design needs at least one sample")]
    EmptyDesign,

    #[error("basis size overflows for {dim} dimensions at total order {order}")]
    BasisSize { dim: usize, order: usize },

    #[error("all quantity-of-interest samples tie across the quantile cut at level {level}")]
    DegenerateLevel { level: usize },

    #[error("function has zero variance; sensitivity indices are undefined")]
    ZeroVariance,

    #[error("sparse fit did not converge after {iterations} iterations (duality gap {gap:e})")]
    NonConvergence {
        iterations: usize,
        gap: f64,
        best: Vec<f64>,
    },

    #[error("{rows} rows cannot determine a surrogate in {dim} dimensions")]
    Underdetermined { rows: usize, dim: usize },

    #[error("covariance eigen-decomposition failed: {0}")]
    Decomposition(String),

    #[error("linear solve failed, relative residual {residual:e}")]
    Solver { residual: f64 },

    #[error("particle integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}
