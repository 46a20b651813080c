use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: leading minor {index} has pivot {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("column {0} has zero variance")]
    ZeroVariance(usize),

    #[error("{solver} did not converge after {iterations} iterations (gap {gap:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        gap: f64,
    },

    #[error("square-root lasso residuals collapsed (sigma {sigma:e}); the fit interpolates")]
    ResidualCollapse { sigma: f64 },

    #[error("degenerate instrument for column {column}: |Z'X| = {inner:e}")]
    DegenerateInstrument { column: usize, inner: f64 },

    #[error("column {column}: {source}")]
    AtColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NotConverged { .. }
            | Error::ResidualCollapse { .. }
            | Error::DegenerateInstrument { .. }
            | Error::ZeroVariance(_)
            | Error::RankDeficient(_) => true,
            Error::AtColumn { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_column(column: usize, source: Error) -> Error {
        Error::AtColumn {
            column,
            source: Box::new(source),
        }
    }
}
