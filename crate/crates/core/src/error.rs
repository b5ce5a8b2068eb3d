use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnotVector(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tangent vectors are (nearly) parallel at a quadrature or sample point.
    #[error("singular surface geometry in element {element} (|a1 x a2| = {area:e})")]
    SingularGeometry { element: usize, area: f64 },

    /// Non-positive surface stretch.
    #[error("inverted element {element} (J = {stretch:e})")]
    InvertedElement { element: usize, stretch: f64 },

    #[error("material mapping: {0}")]
    MaterialMapping(String),

    #[error("Newton iteration did not converge at load factor {load_factor} after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        load_factor: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("singular tangent matrix: {0}")]
    SingularMatrix(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error comes from a failed forward solve (as opposed to bad input).
    pub fn is_forward_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularGeometry { .. }
                | Error::InvertedElement { .. }
                | Error::NonConvergence { .. }
                | Error::SingularMatrix(_)
        )
    }
}
