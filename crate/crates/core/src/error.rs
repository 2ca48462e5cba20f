use thiserror::Error;

/// Errors raised by the numeric routines and the file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("infinite Lipschitz constant: points {0} and {1} are at distance 0 with different values")]
    InfiniteLipschitz(usize, usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("empty constraint family: {0}")]
    EmptyConstraintFamily(String),

    #[error("invariant violated: {name}: measured {lhs:e} exceeds bound {bound:e} (margin {margin:e})", margin = bound - lhs)]
    Invariant { name: String, lhs: f64, bound: f64 },

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("root find failed: {0}")]
    RootFind(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by a violated post-condition rather than bad input.
    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant { .. })
    }

    pub(crate) fn invariant(name: impl Into<String>, lhs: f64, bound: f64) -> Self {
        Error::Invariant { name: name.into(), lhs, bound }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A measured inequality `lhs <= bound` as recorded in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub bound: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, bound: f64) -> Self {
        Self { name: name.into(), lhs, bound }
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.lhs
    }

    pub fn passed(&self) -> bool {
        self.lhs <= self.bound
    }

    /// Converts a failed check into an [`Error::Invariant`].
    pub fn ensure(&self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::invariant(self.name.clone(), self.lhs, self.bound))
        }
    }
}

/// Returns the first failed check as an error.
pub fn ensure_all(checks: &[Check]) -> Result<()> {
    checks.iter().try_for_each(Check::ensure)
}
