use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}")]
    Bracket { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("non-finite value {value} at node {node}{}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    Evaluation {
        node: f64,
        value: f64,
        layer: Option<usize>,
    },
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("no stationary point found; best squared gradient norm {best_residual:e}")]
    Stationarity { best_residual: f64 },
    #[error("problem too large: {0}")]
    Scale(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than by a numerical failure.
    pub fn is_parameter(&self) -> bool {
        matches!(self, Error::Parameter(_) | Error::Domain(_) | Error::Scale(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
