use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("off-grid time {t}")]
    OffGrid { t: f64 },

    #[error("grid mismatch")]
    GridMismatch,

    #[error("invalid interval [{s}, {t}]")]
    InvalidInterval { s: f64, t: f64 },

    #[error("basis finer than grid: index {index} exceeds {max}")]
    BasisFinerThanGrid { index: usize, max: usize },

    #[error("complex-valued input where a real function is required")]
    ComplexInput,

    #[error("no closed-form derivative: {0}")]
    NoClosedFormDerivative(String),

    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),

    #[error("flavor mismatch: {0}")]
    FlavorMismatch(String),

    #[error("mask must be cofinite and nonempty")]
    EmptyMask,

    #[error("invalid index set: {0}")]
    InvalidMask(String),

    #[error("t too close to L: window [{t}, {end}] exceeds horizon")]
    WindowOutOfRange { t: f64, end: f64 },

    #[error("side infeasible at boundary: {0}")]
    SideInfeasible(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{0}")]
    Config(#[from] crate::scenario::ConfigError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
