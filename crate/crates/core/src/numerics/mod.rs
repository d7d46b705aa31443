//! Deterministic quadrature and finite-difference kernel.
//!
//! All routines are pure functions of their inputs. Infinite integration
//! domains are mapped onto finite ones before adaptive Gauss-Kronrod
//! subdivision; derivatives use central (or one-sided, near a domain edge)
//! differences refined by Richardson extrapolation.

mod diff;
mod hermite;
mod quadrature;

pub use diff::{
    differentiate, differentiate_in, mixed_partial, second_order_step, try_differentiate_in,
    try_mixed_partial_log,
};
pub use hermite::{gauss_hermite_expectation, gauss_hermite_rule, try_gauss_hermite_expectation};
pub use quadrature::{integrate, try_integrate, try_integrate_with, Hint};

use serde::Serialize;

use crate::prelude::*;
use crate::{Error, Result};

/// An open interval of the extended real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::params(format!(
                "interval ({lower}, {upper}) is empty"
            )));
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::params("interval has no interior point"));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn positive() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn unit() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    /// Strict interior membership.
    pub fn contains(&self, t: f64) -> bool {
        self.lower < t && t < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper)).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMethod {
    AdaptiveSubdivision,
    GaussHermite,
}

/// Quadrature configuration.
///
/// `method` selects how expectations over a normal covariate law are taken;
/// plain [`integrate`] calls are always adaptive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub method: QuadMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub hermite_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            method: QuadMethod::AdaptiveSubdivision,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
            hermite_nodes: 64,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite() -> Self {
        Self {
            method: QuadMethod::GaussHermite,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::params("quadrature tolerances must be positive"));
        }
        if self.hermite_nodes < 2 {
            return Err(Error::params("at least two Gauss-Hermite nodes are required"));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::params("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Finite-difference configuration.
///
/// First derivatives use `h = base_step * max(1, |at|)` as the finest
/// Richardson step, with coarser rows at `2h`, `4h`, ...; second-order
/// stencils use `base_step^(3/4)` in place of `base_step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiffSpec {
    pub base_step: f64,
    pub richardson_levels: usize,
}

impl Default for DiffSpec {
    fn default() -> Self {
        Self {
            base_step: f64::EPSILON.cbrt(),
            richardson_levels: 2,
        }
    }
}

impl DiffSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0) || !self.base_step.is_finite() {
            return Err(Error::params("base_step must be positive"));
        }
        Ok(())
    }
}

/// A computed value with an advisory error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatedReal {
    pub value: f64,
    pub err_estimate: f64,
    pub evaluations: usize,
}

impl EstimatedReal {
    pub fn new(value: f64, err_estimate: f64, evaluations: usize) -> Self {
        Self {
            value,
            err_estimate,
            evaluations,
        }
    }

    /// A value known to machine precision (one evaluation).
    pub fn exact(value: f64) -> Self {
        Self::new(value, f64::EPSILON * value.abs(), 1)
    }
}
