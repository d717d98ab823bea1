use thiserror::Error;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Regime,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum KpzError {
    #[error("supercritical regime: beta = {beta} is outside (0, sqrt(2*pi) = 2.5066283)")]
    Supercritical { beta: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("unknown mollifier kind `{kind}` (supported: {supported})")]
    UnknownProfile { kind: String, supported: String },

    #[error("oracle resolution: error estimate {achieved:.3e} above tolerance {tol:.3e} within the grid budget")]
    OracleResolution { achieved: f64, tol: f64 },

    #[error("quadrature did not converge: error estimate {achieved:.3e} above tolerance {tol:.3e}")]
    Quadrature { achieved: f64, tol: f64 },

    #[error("positivity lost at step {step}: u = {value}")]
    Positivity { step: usize, value: f64 },

    #[error("degenerate denominator: estimate {mean:.4e} is within 3 SE ({se:.4e}) of zero")]
    DegenerateDenominator { mean: f64, se: f64 },

    #[error("no lattice cell within radius {radius} of ({}, {})", .center[0], .center[1])]
    EmptyDisc { center: [f64; 2], radius: f64 },

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("replica {replica} failed: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<KpzError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl KpzError {
    pub fn class(&self) -> ErrorClass {
        match self {
            KpzError::Supercritical { .. } => ErrorClass::Regime,
            KpzError::Domain(_)
            | KpzError::Config(_)
            | KpzError::UnknownProfile { .. }
            | KpzError::EmptyDisc { .. }
            | KpzError::TooFewSamples { .. }
            | KpzError::Parse(_) => ErrorClass::Config,
            KpzError::OracleResolution { .. }
            | KpzError::Quadrature { .. }
            | KpzError::Positivity { .. }
            | KpzError::DegenerateDenominator { .. } => ErrorClass::Numerical,
            KpzError::Replica { source, .. } => source.class(),
            KpzError::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        KpzError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, KpzError>;
