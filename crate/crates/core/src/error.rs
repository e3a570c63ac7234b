use thiserror::Error;

/// Error type shared by all field operations, solvers and IO.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("chart mismatch: {0}")]
    ChartMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate metric at t = {time:.6e}: min e^(2u) = {min_weight:.3e}")]
    DegenerateMetric { time: f64, min_weight: f64 },

    #[error("CFL violation at t = {time:.6e}: dt = {dt:.3e} exceeds stable limit {limit:.3e}")]
    CflViolation { time: f64, dt: f64, limit: f64 },

    #[error("positivity loss at t = {time:.6e}: min value {min_value:.3e} (dt too large)")]
    PositivityLoss { time: f64, min_value: f64 },

    #[error("non-finite field values after {context}")]
    NonFinite { context: String },

    #[error("time {time:.6e} outside trajectory range [{t0:.6e}, {t1:.6e}]")]
    TimeOutOfRange { time: f64, t0: f64, t1: f64 },

    #[error("time derivative requested at trajectory endpoint t = {0:.6e} and no analytic form available")]
    EndpointTime(f64),

    #[error("model error: {0}")]
    Model(String),

    #[error("normalization violated: measured mass {mass:.12e}, expected 1 within {tol:.1e}")]
    Normalization { mass: f64, tol: f64 },

    #[error("minimizer did not converge after {iters} iterations: best residual {residual:.3e}")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("curve optimizer failed: best value {best:.6e} is an upper bound only")]
    CurveOptimizer { best: f64 },

    #[error("check precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
