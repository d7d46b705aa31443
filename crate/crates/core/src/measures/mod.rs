//! The association measures, each available conditionally on `W = w` or
//! marginally over `W`:
//!
//! * EDF `∂E(Y|x)/∂x`
//! * MDI `∂²log f(y|x)/∂x∂y`
//! * LED `∂log E(Y|x)/∂x`
//! * DDF `∂F(y|x)/∂x`
//! * binary MDI `∂/∂x log(P(Y=1|x)/P(Y=0|x))`
//!
//! Marginal measures differentiate the mixed quantity; they never mix
//! derivatives.

mod correlation;

pub use correlation::{correlation_mc, CorrelationEstimate};

use serde::{Deserialize, Serialize};

use crate::model::{ConditionalModel, YKind};
use crate::numerics::{
    second_order_step, try_differentiate_in, try_mixed_partial_log, DiffSpec, EstimatedReal,
    Interval,
};
use crate::prelude::*;
use crate::{Error, Result};

/// Means below this are rejected by the LED.
pub const MEAN_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "EDF")]
    Edf,
    #[serde(rename = "MDI")]
    Mdi,
    #[serde(rename = "LED")]
    Led,
    #[serde(rename = "DDF")]
    Ddf,
    #[serde(rename = "MDI-binary")]
    MdiBinary,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::Edf,
        MeasureKind::Mdi,
        MeasureKind::Led,
        MeasureKind::Ddf,
        MeasureKind::MdiBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Edf => "EDF",
            MeasureKind::Mdi => "MDI",
            MeasureKind::Led => "LED",
            MeasureKind::Ddf => "DDF",
            MeasureKind::MdiBinary => "MDI-binary",
        }
    }

    /// Case-insensitive; `_` and `-` are interchangeable.
    pub fn from_name(name: &str) -> Option<Self> {
        let norm = name.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|k| k.name().to_ascii_lowercase() == norm)
    }

    /// True when the measure is evaluated at a `y` value.
    pub fn needs_y(self) -> bool {
        matches!(self, MeasureKind::Mdi | MeasureKind::Ddf)
    }

    /// Checks that `model` can evaluate this measure.
    pub fn check_capabilities(self, model: &ConditionalModel) -> Result<()> {
        let caps = model.capabilities();
        let ok = match self {
            MeasureKind::Edf | MeasureKind::Led => caps.mean || caps.density,
            MeasureKind::Mdi => caps.density && model.y_kind == YKind::Continuous,
            MeasureKind::Ddf => caps.cdf,
            MeasureKind::MdiBinary => caps.density && model.y_kind == YKind::Binary,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::missing(format!(
                "`{}` cannot evaluate the {} (y kind {:?})",
                model.name,
                self.name(),
                model.y_kind
            )))
        }
    }
}

impl core::fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a measure is evaluated. `w = None` means marginally over `W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurePoint {
    pub x: f64,
    pub y: Option<f64>,
    pub w: Option<f64>,
}

impl MeasurePoint {
    pub fn new(x: f64, y: Option<f64>, w: Option<f64>) -> Self {
        Self { x, y, w }
    }
}

/// Evaluates `kind` at `point`.
pub fn evaluate(kind: MeasureKind, model: &ConditionalModel, point: MeasurePoint) -> Result<EstimatedReal> {
    let y = || {
        point
            .y
            .ok_or_else(|| Error::params(format!("the {} needs a y value", kind.name())))
    };
    match kind {
        MeasureKind::Edf => edf(model, point.x, point.w),
        MeasureKind::Mdi => mdi(model, y()?, point.x, point.w),
        MeasureKind::Led => led(model, point.x, point.w),
        MeasureKind::Ddf => ddf(model, y()?, point.x, point.w),
        MeasureKind::MdiBinary => mdi_binary(model, point.x, point.w),
    }
}

/// Differentiates a quantity that is itself an estimate. The inner error is
/// amplified by the smallest step of the stencil.
pub(crate) fn derivative<F>(mut q: F, at: f64, domain: Interval, spec: &DiffSpec) -> Result<EstimatedReal>
where
    F: FnMut(f64) -> Result<EstimatedReal>,
{
    let mut inner = 0f64;
    let mut inner_evals = 0usize;
    let d = try_differentiate_in(
        |t| {
            let r = q(t)?;
            inner = inner.max(r.err_estimate);
            inner_evals += r.evaluations;
            Ok(r.value)
        },
        at,
        domain,
        spec,
    )?;
    let h_min = spec.base_step * at.abs().max(1.0) / 2f64.powi(spec.richardson_levels as i32);
    Ok(EstimatedReal::new(
        d.value,
        d.err_estimate + 2.0 * inner / h_min,
        d.evaluations.max(inner_evals),
    ))
}

fn mean_at(model: &ConditionalModel, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    match w {
        Some(w) => model.conditional_mean(x, w),
        None => model.marginal_mean(x),
    }
}

/// EDF: `∂E(Y|x,w)/∂x`, or `∂E(Y|x)/∂x` when `w` is `None`.
pub fn edf(model: &ConditionalModel, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    MeasureKind::Edf.check_capabilities(model)?;
    derivative(|t| mean_at(model, t, w), x, model.x_domain, &model.settings.diff)
}

/// LED: `∂log E(Y|x,w)/∂x`, or the marginal version when `w` is `None`.
pub fn led(model: &ConditionalModel, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    MeasureKind::Led.check_capabilities(model)?;
    derivative(
        |t| {
            let m = mean_at(model, t, w)?;
            if !(m.value > MEAN_FLOOR) {
                return Err(Error::NonPositiveMean { x: t, value: m.value });
            }
            Ok(EstimatedReal::new(m.value.ln(), m.err_estimate / m.value, m.evaluations))
        },
        x,
        model.x_domain,
        &model.settings.diff,
    )
}

/// DDF: `∂F(y|x,w)/∂x`, or `∂F(y|x)/∂x` when `w` is `None`.
pub fn ddf(model: &ConditionalModel, y: f64, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    MeasureKind::Ddf.check_capabilities(model)?;
    derivative(
        |t| match w {
            Some(w) => model.conditional_cdf(y, t, w),
            None => model.marginal_cdf(y, t),
        },
        x,
        model.x_domain,
        &model.settings.diff,
    )
}

/// MDI: `∂²log f(y|x,w)/∂x∂y`, or `∂²log f(y|x)/∂x∂y` when `w` is `None`.
///
/// The `y` step is kept inside the conditional support at `(x, w)`, or the
/// support envelope for the marginal density.
pub fn mdi(model: &ConditionalModel, y: f64, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    MeasureKind::Mdi.check_capabilities(model)?;
    let diff = &model.settings.diff;
    let y_domain = match w {
        Some(w) => model.response.support.effective(x, w)?,
        None => model.response.support.envelope,
    };
    if !y_domain.contains(y) {
        return Err(Error::NonPositiveDensity { x, y, value: 0.0 });
    }
    mixed_log_derivative(
        |t, s| match w {
            Some(w) => Ok(EstimatedReal::exact(model.conditional_density(s, t, w)?)),
            None => model.marginal_density(s, t),
        },
        x,
        y,
        model.x_domain,
        y_domain,
        diff,
    )
}

/// `∂²log q/∂x∂y` for a positive quantity that is itself an estimate.
pub(crate) fn mixed_log_derivative<F>(
    mut q: F,
    x: f64,
    y: f64,
    x_domain: Interval,
    y_domain: Interval,
    diff: &DiffSpec,
) -> Result<EstimatedReal>
where
    F: FnMut(f64, f64) -> Result<EstimatedReal>,
{
    let mut inner_rel = 0f64;
    let mut inner_evals = 0usize;
    let d = try_mixed_partial_log(
        |t, s| {
            let r = q(t, s)?;
            if r.value > 0.0 {
                inner_rel = inner_rel.max(r.err_estimate / r.value);
            }
            inner_evals += r.evaluations;
            Ok(r.value)
        },
        x,
        y,
        x_domain,
        y_domain,
        diff,
    )?;
    let shrink = 4f64.powi(diff.richardson_levels as i32);
    let area = second_order_step(diff, x) * second_order_step(diff, y).min(y.abs().max(f64::MIN_POSITIVE));
    Ok(EstimatedReal::new(
        d.value,
        d.err_estimate + 4.0 * inner_rel * shrink / area,
        d.evaluations.max(inner_evals),
    ))
}

/// Binary MDI: `∂/∂x log(P(Y=1|x,w)/P(Y=0|x,w))`, or the marginal version.
pub fn mdi_binary(model: &ConditionalModel, x: f64, w: Option<f64>) -> Result<EstimatedReal> {
    MeasureKind::MdiBinary.check_capabilities(model)?;
    derivative(
        |t| {
            let p = match w {
                Some(w) => EstimatedReal::exact(model.conditional_density(1.0, t, w)?),
                None => model.marginal_density(1.0, t)?,
            };
            if !(p.value > 0.0 && p.value < 1.0) {
                return Err(Error::DegenerateProbability { x: t, value: p.value });
            }
            let q = 1.0 - p.value;
            Ok(EstimatedReal::new(
                (p.value / q).ln(),
                p.err_estimate / (p.value * q),
                p.evaluations,
            ))
        },
        x,
        model.x_domain,
        &model.settings.diff,
    )
}
