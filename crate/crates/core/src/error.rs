use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a type invariant (probabilities, costs, simplex membership...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An outcome vector does not match the test pattern it is evaluated against.
    #[error("outcome does not match test pattern: {0}")]
    Structural(String),

    /// A configuration document failed validation at `path`.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// No pattern in the candidate set has a positive definite information matrix.
    #[error("no finite-variance design exists at p = {p:?}: no pattern has a positive definite information matrix")]
    NoFiniteDesign { p: Vec<f64> },

    /// No pattern keeps its information matrix uniformly positive definite over the box.
    #[error("worst-case variance is unbounded over the parameter box (best lambda_min = {worst_lambda_min:e})")]
    UnboundedWorstCase { worst_lambda_min: f64 },

    #[error("information matrix is numerically singular")]
    Singular,

    #[error("{what} did not converge after {iterations} iterations (best iterate {best:?})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        best: Vec<f64>,
    },

    #[error("parameter grid is empty")]
    EmptyGrid,

    #[error("{kind} `{name}`: {source}")]
    Stratum {
        kind: &'static str,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the inputs rather than by a numerical solve.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::Structural(_)
            | Error::Config { .. }
            | Error::EmptyGrid
            | Error::Io(_)
            | Error::Json(_) => true,
            Error::Stratum { source, .. } => source.is_validation(),
            Error::NoFiniteDesign { .. }
            | Error::UnboundedWorstCase { .. }
            | Error::Singular
            | Error::NonConvergence { .. } => false,
        }
    }
}
