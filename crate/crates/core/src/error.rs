use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Invariant,
    Domain,
    NonConvergence,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invariant violated: {rule}")]
    Invariant { rule: String },

    #[error("unknown generator `{0}` in the main system")]
    UnknownGenerator(String),

    #[error("expected frequency deviation must be nonzero")]
    ZeroFrequencyDeviation,

    #[error("adjacent system `{id}` has an empty droop interval (upper bound {hi})")]
    InfeasibleAdjacent { id: String, hi: f64 },

    #[error("adjacent system `{0}` has zero total generator droop")]
    ZeroGeneratorDroop(String),

    #[error("total droop (sum of HVDC and generator coefficients) is not positive: {0}")]
    NonPositiveDroop(f64),

    #[error("droop vector has {got} entries, expected {expected}")]
    DroopLength { expected: usize, got: usize },

    #[error("virtual price interval is empty: [{lo}, {hi}]")]
    EmptyGammaSet { lo: f64, hi: f64 },

    #[error("analytic equilibrium is not interior for `{id}` (k = {k}, bounds [{lo}, {hi}]); use the iterative solver")]
    NotInterior { id: String, k: f64, lo: f64, hi: f64 },

    #[error("required droop {required} does not exceed the saturated capacity {capacity}")]
    NotSaturated { required: f64, capacity: f64 },

    #[error("required droop {required} is outside the feasible range [{lo}, {hi}]")]
    InfeasibleDemand { required: f64, lo: f64, hi: f64 },

    #[error("curvature of `{0}` is zero; the problem is degenerate at this frequency deviation")]
    DegenerateCurvature(String),

    #[error("equilibrium for `{fault}` did not converge within {iterations} rounds")]
    NotConverged { fault: String, iterations: usize },

    #[error("no fault `{0}` in the configuration")]
    UnknownFault(String),

    #[error("fault set is empty")]
    EmptyFaultSet,

    #[error("no curve row for fault `{0}`")]
    MissingRow(String),

    #[error("platform: {0}")]
    Platform(#[from] crate::platform::PlatformError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(rule: impl Into<String>) -> Self {
        Error::Invariant { rule: rule.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => ErrorKind::Parse,
            Error::Invariant { .. } | Error::UnknownGenerator(_) => ErrorKind::Invariant,
            Error::Io(_) => ErrorKind::Io,
            Error::NotConverged { .. }
            | Error::Platform(crate::platform::PlatformError::Timeout { .. }) => {
                ErrorKind::NonConvergence
            }
            _ => ErrorKind::Domain,
        }
    }
}
