use alloc::string::String;

use crate::chain::ChainViolation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    Chain(#[from] ChainViolation),

    #[error("invalid grid spec: {0}")]
    SpecInvalid(String),

    #[error("state count {states} exceeds cap {cap}")]
    Overflow { states: u128, cap: usize },

    #[error("{what} {value} out of range (bound {bound})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense path limited to {cap} states, got {size}")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("singular system: pivot {pivot:e} in column {column}")]
    SingularSystem { pivot: f64, column: usize },

    #[error(
        "no convergence after {iterations} iterations (last estimate {last_estimate}, bracket [{lower}, {upper}])"
    )]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
        lower: f64,
        upper: f64,
    },

    #[error("all {episodes} episodes hit the step cap")]
    AllTruncated { episodes: u64 },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularSystem { .. } | Error::NoConvergence { .. })
    }
}
