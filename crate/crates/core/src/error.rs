use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite value {value} sampled in cell {alpha:?}")]
    NonFiniteSample { alpha: Vec<i64>, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("series remainder bound needs {required} terms, {given} given")]
    SeriesTooShort { required: usize, given: usize },
    #[error("kernel tail {tail:.3e} exceeds {tol:.1e} at radius {radius}")]
    TailTooLarge { tail: f64, tol: f64, radius: usize },
    #[error("no contraction after {m_max} Neumann terms or interval splits (measured ratio {ratio:.4})")]
    NoContraction { m_max: usize, ratio: f64 },
    #[error("explicit step {dt:.3e} exceeds stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("fixed point not reached: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;
