use std::fmt;

use thiserror::Error;

/// Which step-size vector failed a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffKind {
    Beta,
    Gamma,
}

impl fmt::Display for CoeffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffKind::Beta => write!(f, "beta"),
            CoeffKind::Gamma => write!(f, "gamma"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid function class: need 0 < mu <= L, got mu = {mu}, L = {l}")]
    InvalidClass { mu: f64, l: f64 },

    #[error("unknown preset `{0}` (expected one of gm, hbm, fgm, tmm)")]
    UnknownPreset(String),

    #[error("{0} coefficients sum to {1}, expected 1")]
    SumNotOne(CoeffKind, f64),

    #[error("gradient step alpha must be nonzero")]
    ZeroAlpha,

    #[error("gamma[0] must be nonzero")]
    ZeroGammaZero,

    #[error("{kind} has length {found}, expected {expected}")]
    CoefficientLength {
        kind: CoeffKind,
        expected: usize,
        found: usize,
    },

    #[error("method degree {spec} does not match workspace degree {workspace}")]
    DegreeMismatch { spec: usize, workspace: usize },

    #[error("index {index} out of range: {what}")]
    IndexOutOfRange { index: i64, what: &'static str },

    #[error("diagonal pair ({0}, {0}) carries no information and is rejected")]
    DiagonalPair(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no certificate found in the bracket [0, {rho_max}]")]
    NoCertificateWithinBracket { rho_max: f64 },

    #[error("SDP backend returned an inconclusive result at rho = {rho}: {detail}")]
    BackendUnknown { rho: f64, detail: String },

    #[error("SDP backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("failed to parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
