use thiserror::Error;

/// Errors raised across the simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for tabulated schedule of length {len}")]
    ScheduleIndex { index: usize, len: usize },

    #[error("step value {value} at index {index} lies outside (0, 1)")]
    StepOutOfRange { index: usize, value: f64 },

    #[error("invalid schedule parameters: {0}")]
    InvalidSchedule(String),

    #[error("clock horizon exceeded: no index within {len} entries reaches time {target}")]
    HorizonExceeded { target: f64, len: usize },

    #[error("lookback window is empty: t({index}) = {time} < {window}")]
    EmptyLookback {
        index: usize,
        time: f64,
        window: f64,
    },

    #[error("kernel is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("kernel is reducible: state {from} cannot reach state {to}")]
    Reducible { from: usize, to: usize },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("matrix is not positive semidefinite (least eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("iterate diverged at step {index}: |{component}| exceeds {limit:e}")]
    Divergence {
        index: usize,
        component: String,
        limit: f64,
    },

    #[error("maximum iterations ({iterations}) exceeded, final residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("window [{start}, {end}] exceeds recorded range [{first}, {last})")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        first: usize,
        last: usize,
    },

    #[error("ensemble of {got} is below the required minimum of {min}")]
    InsufficientEnsemble { got: usize, min: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
