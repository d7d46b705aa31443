use crate::prelude::*;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the core crate can report.
///
/// Numerical breakdowns (`NonConvergence`, `NonFiniteEvaluation`,
/// `StepUnderflow`) are kept apart from statistical findings so that the
/// verdict layer can mark a point indeterminate instead of not collapsible.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quadrature did not converge after {subdivisions} subdivisions (value {value:e}, error estimate {err_estimate:e})")]
    NonConvergence {
        subdivisions: usize,
        value: f64,
        err_estimate: f64,
    },
    #[error("non-finite function value at {at}")]
    NonFiniteEvaluation { at: f64 },
    #[error("finite-difference neighbourhood of {at} leaves the function domain")]
    StepUnderflow { at: f64 },
    #[error("density {value:e} is not positive at (x={x}, y={y})")]
    NonPositiveDensity { x: f64, y: f64, value: f64 },
    #[error("mean {value:e} is not positive at x={x}")]
    NonPositiveMean { x: f64, value: f64 },
    #[error("class probability {value} is degenerate at x={x}")]
    DegenerateProbability { x: f64, value: f64 },
    #[error("conditioning event has negligible density at {at}")]
    DegenerateConditional { at: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model lacks capability: {0}")]
    MissingCapability(String),
    #[error("covariate components are not conditionally independent given x (deviation {deviation:e})")]
    FactorizationViolated { deviation: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("perfect separation detected in logistic fit")]
    Separation,
    #[error("iterative fit did not converge after {iterations} iterations (score norm {score_norm:e})")]
    NotConverged { iterations: usize, score_norm: f64 },
    #[error("data are not overdispersed (variance excess {excess:e})")]
    Underdispersed { excess: f64 },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

impl Error {
    /// True for failures of the numerical machinery itself, as opposed to
    /// capability or parameter problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFiniteEvaluation { .. }
                | Error::StepUnderflow { .. }
                | Error::NonPositiveDensity { .. }
                | Error::NonPositiveMean { .. }
                | Error::DegenerateProbability { .. }
                | Error::DegenerateConditional { .. }
                | Error::Evaluation(_)
        )
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }

    pub(crate) fn missing(what: impl Into<String>) -> Self {
        Error::MissingCapability(what.into())
    }
}
