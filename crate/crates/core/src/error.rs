use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("block {block}: {detail}")]
    Block { block: usize, detail: String },

    #[error("matrix is not Hermitian (defect {defect:.3e} exceeds {tol:.3e})")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid density operator: {0}")]
    InvalidState(String),

    #[error("invalid tolerance configuration: {0}")]
    InvalidTolerance(String),

    #[error("map is not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },

    #[error("map is not unital (residual {residual:.3e})")]
    NotUnital { residual: f64 },

    #[error("channel is not idempotent (residual {residual:.3e})")]
    NotIdempotent { residual: f64 },

    #[error("fixed-point algebra is not closed under {operation} (residual {residual:.3e})")]
    AlgebraClosure {
        operation: &'static str,
        residual: f64,
    },

    #[error("block separation failed after {attempts} attempts: {detail}; try a looser cluster_tol")]
    Clustering { attempts: usize, detail: String },

    #[error("{what} is not integral (pre-rounding value {value})")]
    Integrality { what: &'static str, value: f64 },

    #[error("resource budget exceeded: instance needs dimension {required}, budget is {budget}")]
    Budget { required: usize, budget: usize },

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("degenerate support: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
