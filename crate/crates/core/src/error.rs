use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside the strategy box: {0}")]
    Domain(String),

    #[error("invalid game definition: {0}")]
    InvalidGame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("active region is not a singleton at x = {x} (slice radius {delta:e})")]
    RegionBoundary { x: f64, delta: f64 },

    #[error("oracle budget exceeded: {needed} grid evaluations requested, budget {budget}")]
    Budget { needed: f64, budget: f64 },

    #[error("best-response cycle of length {length} detected on the oracle grid")]
    Cycle { length: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
