use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time {t} is outside the signal domain [0, {end}]")]
    OutOfDomain { t: f64, end: f64 },

    #[error("mode index {mode} is not in 1..={k}")]
    InvalidMode { mode: usize, k: usize },

    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("too few windows: {windows} complete windows, need at least 10")]
    TooFewWindows { windows: usize },

    #[error("wrong structure: {0}")]
    WrongStructure(String),

    #[error("no common eigenvector found at tolerance {tol:e}")]
    NoCommonEigenvector { tol: f64 },

    #[error("ill-conditioned eigenspace intersection: {0}")]
    IllConditioned(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("lattice too coarse: {0}")]
    LatticeTooCoarse(String),

    #[error("invalid estimation config: {0}")]
    Config(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
