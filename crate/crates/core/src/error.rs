use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigenvalue solver supports dimension at most {max}, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("polynomial root iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid control instants: {0}")]
    InvalidInstants(String),

    #[error("time-reversed sampling needs a horizon T")]
    MissingHorizon,

    #[error("expected {expected} control instants (one per state dimension), got {got}")]
    InstantCount { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "instant window τ_n − τ_1 = {window} is not below the critical window d_A = {critical}; \
         full sampled rank is not guaranteed"
    )]
    WindowViolated { window: f64, critical: f64 },

    #[error("pair (A, B) fails the Kalman rank condition (rank {rank} < {dim})")]
    NotControllable { rank: usize, dim: usize },

    #[error("pair (A, B) satisfies the Kalman rank condition; no obstruction direction exists")]
    Controllable,

    #[error(
        "sampled controllability matrix has rank {rank} < {dim} at the given instants; \
         the instant subspaces do not span the state space"
    )]
    RankDeficient { rank: usize, dim: usize },

    #[error(
        "null-control construction needs the control region to cover the whole interval; \
         a strict sub-region admits no exact null control"
    )]
    RegionNotFull,

    #[error("reachability map too large: {0} entries exceeds the guard of 10^7")]
    TooLarge(usize),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence(_))
    }
}
