use thiserror::Error;

/// Errors produced by the lattice, solver, decomposition and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} is not a dyadic integer")]
    NotDyadic(f64),

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("the zero frequency has no angle")]
    ZeroAngle,

    #[error("solver diverged at t = {time}: {detail}")]
    Diverged { time: f64, detail: String },

    #[error("bandwidth overflow: {0}")]
    BandwidthOverflow(String),

    #[error("trajectory too short: {0}")]
    TrajectoryTooShort(String),

    #[error("budget of {budget} tuples is below the {required} needed for an exhaustive sum")]
    BudgetTooSmall { budget: u64, required: u64 },

    /// A checked identity or bound was violated in a way that falsifies the
    /// statement under test (not a tolerance miss).
    #[error("verification failure: {0}")]
    Verification(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
