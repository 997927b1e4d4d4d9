use thiserror::Error;

/// Every failure the engines can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unphysical state: {0}")]
    Unphysical(String),
    #[error("degenerate measurement: marginal variance {0:e}")]
    DegenerateMeasurement(f64),
    #[error("gain-variance breakdown: filtered precision not positive (2*lambda*V = {0:.6})")]
    FilterBreakdown(f64),
    #[error("operational regime exceeded: coverage {coverage:.6} below {required:.4}")]
    OperationalRegime { coverage: f64, required: f64 },
    #[error("no unity-gain solution: {0}")]
    NoUnityGain(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("acceptance starvation: 0 of {trials} trials accepted (rate < {rate_bound:e} at 95%)")]
    AcceptanceStarvation { trials: u64, rate_bound: f64 },
    #[error("truncation overflow: tail mass {tail:e} exceeds {limit:e}")]
    TruncationOverflow { tail: f64, limit: f64 },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Short stable name, used by the command-line tool in error reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Unphysical(_) => "unphysical-state",
            Error::DegenerateMeasurement(_) => "degenerate-measurement",
            Error::FilterBreakdown(_) => "filter-breakdown",
            Error::OperationalRegime { .. } => "operational-regime-exceeded",
            Error::NoUnityGain(_) => "no-unity-gain",
            Error::QuadratureNonConvergence(_) => "quadrature-non-convergence",
            Error::AcceptanceStarvation { .. } => "acceptance-starvation",
            Error::TruncationOverflow { .. } => "truncation-overflow",
            Error::Io(_) => "io",
        }
    }

    /// True for errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FilterBreakdown(_)
                | Error::OperationalRegime { .. }
                | Error::NoUnityGain(_)
                | Error::QuadratureNonConvergence(_)
                | Error::AcceptanceStarvation { .. }
                | Error::TruncationOverflow { .. }
                | Error::DegenerateMeasurement(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
