use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no mass above reserve {0}")]
    NoMassAboveReserve(f64),

    #[error("unsupported order statistic rank {rank} for n = {n}")]
    UnsupportedRank { rank: usize, n: usize },

    /// The integration trajectory left the open band `v < b < Φ⁻¹(v)`.
    #[error("band escape at v = {v}: {detail}")]
    BandEscape { v: f64, detail: String },

    #[error("singular start failure: {0}")]
    SingularStart(String),

    #[error("no convergence after {iterations} iterations (last sup-norm delta {delta:e})")]
    NoConvergence { iterations: usize, delta: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid auction spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::BandEscape { .. } | Error::SingularStart(_) | Error::NoConvergence { .. }
        )
    }
}
