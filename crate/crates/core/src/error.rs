use std::fmt;

/// Location of a failure: the module and the operation that raised it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub module: &'static str,
    pub op: &'static str,
}

impl Origin {
    pub const fn new(module: &'static str, op: &'static str) -> Self {
        Self { module, op }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.module, self.op)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("{origin}: invalid input: {msg}")]
    Invalid { origin: Origin, msg: String },

    /// The antiderivative was asked to integrate data with a non-negligible mean.
    #[error("{origin}: mean {mean:.3e} exceeds {tol:.1e} * max|f| = {bound:.3e}; input is not effectively mean-zero")]
    MeanViolation {
        origin: Origin,
        mean: f64,
        tol: f64,
        bound: f64,
    },

    /// Eigenvalues too close to the zero threshold to certify an inertia split.
    #[error("{origin}: ambiguous inertia split: {msg}")]
    Ambiguous { origin: Origin, msg: String },

    #[error("{origin}: optimizer did not converge: {msg}")]
    NotConverged { origin: Origin, msg: String },

    #[error("{origin}: blow-up guard tripped: {msg}")]
    BlowUp { origin: Origin, msg: String },

    /// Non-finite arithmetic or an ill-conditioned construction.
    #[error("{origin}: numerical failure: {msg}")]
    Numerical { origin: Origin, msg: String },
}

impl Error {
    pub fn invalid(origin: Origin, msg: impl Into<String>) -> Self {
        Error::Invalid {
            origin,
            msg: msg.into(),
        }
    }

    pub fn numerical(origin: Origin, msg: impl Into<String>) -> Self {
        Error::Numerical {
            origin,
            msg: msg.into(),
        }
    }

    pub fn origin(&self) -> Origin {
        match self {
            Error::Invalid { origin, .. }
            | Error::MeanViolation { origin, .. }
            | Error::Ambiguous { origin, .. }
            | Error::NotConverged { origin, .. }
            | Error::BlowUp { origin, .. }
            | Error::Numerical { origin, .. } => *origin,
        }
    }

    /// True for failures of numerical health (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Invalid { .. } | Error::MeanViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
