use std::fmt;

use swent::Error as CoreError;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    Config = 2,
    Numerical = 3,
    BoundViolation = 4,
    Reproduction = 5,
}

/// An error tagged with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Failure::new(ExitKind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let kind = match e {
            CoreError::Numerical(_)
            | CoreError::IllConditioned(_)
            | CoreError::NoCommonEigenvector { .. }
            | CoreError::LatticeTooCoarse(_)
            | CoreError::DegenerateFit(_) => ExitKind::Numerical,
            _ => ExitKind::Config,
        };
        Failure::new(kind, e)
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Attaches an exit class to `anyhow`-style results.
pub trait WithExit<T> {
    fn exit(self, kind: ExitKind) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> WithExit<T> for Result<T, E> {
    fn exit(self, kind: ExitKind) -> Outcome<T> {
        self.map_err(|e| Failure::new(kind, e))
    }
}
