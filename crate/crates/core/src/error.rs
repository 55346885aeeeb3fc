use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("material error: {0}")]
    Material(String),

    #[error("solver failed to converge: {context} (residual {residual:e} after {iterations} iterations)")]
    SolverDiverged {
        context: String,
        residual: f64,
        iterations: usize,
    },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
