use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("power iteration did not converge after {iters} iterations (last change {change:e})")]
    NoConvergence { iters: usize, change: f64 },
    #[error("no sign change of {what} in [{lo}, {hi}]")]
    NoRoot { what: &'static str, lo: f64, hi: f64 },
    #[error("{0} sign changes found; at most two expected")]
    TooManyRoots(usize),
    #[error("infinite exponential functional: {0}")]
    Divergent(String),
    #[error("moment not guaranteed finite: {0}")]
    MomentGuard(String),
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("query beyond the simulated range (t = {0})")]
    BeyondRange(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
