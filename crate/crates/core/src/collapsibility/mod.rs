//! Numerical verdicts on simple and average collapsibility of a measure over
//! `W`, on a finite grid.
//!
//! A point whose evaluation breaks down numerically makes the verdict
//! [`Classification::Indeterminate`]; it is never read as a finding.

mod probes;
mod reversal;

pub use probes::{
    probe_conditions, ProbeOutcome, ProbeReport, ProbeStatus, CONDITIONING_TOL, COVARIATE_FREE_OF_X,
    MEAN_HOMOGENEOUS, PROBE_GRID_POINTS, X_INDEP_W_GIVEN_Y, X_SLOPE_MATCHES, Y_INDEP_W_GIVEN_X,
    Y_SLOPE_MATCHES,
};
pub use reversal::{detect_reversal, ReversalReport, ReversalWitness};

use serde::Serialize;

use crate::measures::{edf, evaluate, MeasureKind, MeasurePoint};
use crate::model::ConditionalModel;
use crate::numerics::EstimatedReal;
use crate::prelude::*;
use crate::{Error, Result};

pub const DEFAULT_TOL_ABS: f64 = 1e-5;
pub const DEFAULT_TOL_REL: f64 = 1e-4;

/// The finite grid standing in for "for all x" (and "for all y", "for all w").
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_points: Vec<f64>,
    pub y_points: Vec<f64>,
    pub w_points: Vec<f64>,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl GridSpec {
    pub fn new(x_points: &[f64]) -> Self {
        Self {
            x_points: x_points.to_vec(),
            y_points: Vec::new(),
            w_points: Vec::new(),
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
        }
    }

    pub fn with_y(mut self, y_points: &[f64]) -> Self {
        self.y_points = y_points.to_vec();
        self
    }

    pub fn with_w(mut self, w_points: &[f64]) -> Self {
        self.w_points = w_points.to_vec();
        self
    }

    pub fn with_tolerances(mut self, tol_abs: f64, tol_rel: f64) -> Self {
        self.tol_abs = tol_abs;
        self.tol_rel = tol_rel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn increasing(name: &str, v: &[f64]) -> Result<()> {
            if v.iter().any(|t| !t.is_finite()) || v.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::params(format!("{name} must be finite and strictly increasing")));
            }
            Ok(())
        }
        if self.x_points.is_empty() {
            return Err(Error::params("the grid needs at least one x point"));
        }
        increasing("x_points", &self.x_points)?;
        increasing("y_points", &self.y_points)?;
        increasing("w_points", &self.w_points)?;
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::params("grid tolerances must be positive"));
        }
        Ok(())
    }

    /// `max(tol_abs, tol_rel * |reference|)`.
    pub fn tolerance(&self, reference: f64) -> f64 {
        self.tol_abs.max(self.tol_rel * reference.abs())
    }

    /// The `(x, y)` pairs a measure is evaluated at.
    pub fn xy_pairs(&self, measure: MeasureKind) -> Result<Vec<(f64, Option<f64>)>> {
        if measure.needs_y() {
            if self.y_points.is_empty() {
                return Err(Error::params(format!("the {} needs y points", measure.name())));
            }
            Ok(self
                .x_points
                .iter()
                .flat_map(|&x| self.y_points.iter().map(move |&y| (x, Some(y))))
                .collect())
        } else {
            Ok(self.x_points.iter().map(|&x| (x, None)).collect())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    SimpleCollapsible,
    AverageCollapsible,
    NotCollapsible,
    Indeterminate,
}

impl Classification {
    pub fn is_collapsible(self) -> bool {
        matches!(self, Classification::SimpleCollapsible | Classification::AverageCollapsible)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Average,
    Simple,
}

/// One grid point. With `w` absent, `conditional` is `E_{W|x}` of the
/// conditional measure; with `w` present it is the measure at that `w`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: Option<f64>,
    pub w: Option<f64>,
    pub conditional: Option<EstimatedReal>,
    pub marginal: Option<EstimatedReal>,
    pub gap: Option<f64>,
    pub tolerance: Option<f64>,
    pub within: bool,
    /// EDF only: `∫ E(Y|x,w) ∂f(w|x)/∂x dw`.
    pub residual: Option<EstimatedReal>,
    pub error: Option<String>,
}

impl PointRecord {
    fn failed(x: f64, y: Option<f64>, w: Option<f64>, err: &Error) -> Self {
        Self {
            x,
            y,
            w,
            conditional: None,
            marginal: None,
            gap: None,
            tolerance: None,
            within: false,
            residual: None,
            error: Some(err.to_string()),
        }
    }

    /// `|marginal - (conditional + residual)|` and the summed error
    /// estimates, when all three are known.
    pub fn decomposition(&self) -> Option<(f64, f64)> {
        let (c, m, r) = (self.conditional?, self.marginal?, self.residual?);
        Some((
            (m.value - c.value - r.value).abs(),
            m.err_estimate + c.err_estimate + r.err_estimate,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapsibilityVerdict {
    pub measure: MeasureKind,
    pub check: CheckKind,
    pub grid: GridSpec,
    pub points: Vec<PointRecord>,
    pub classification: Classification,
    /// Largest gap over the averaged points.
    pub max_average_gap: Option<f64>,
    /// Largest gap over the per-`w` points of a simple check.
    pub max_simple_gap: Option<f64>,
    pub reversal_flag: bool,
    pub reversal: Option<ReversalReport>,
    pub condition_probes: Option<ProbeReport>,
}

impl CollapsibilityVerdict {
    pub fn average_points(&self) -> impl Iterator<Item = &PointRecord> {
        self.points.iter().filter(|p| p.w.is_none())
    }

    pub fn with_reversal(mut self, report: ReversalReport) -> Self {
        self.reversal_flag = report.reversal;
        self.reversal = Some(report);
        self
    }

    pub fn with_probes(mut self, report: ProbeReport) -> Self {
        self.condition_probes = Some(report);
        self
    }
}

/// Propagates capability and parameter errors; keeps numerical ones at the
/// point level.
fn point_error(err: Error) -> Result<Error> {
    if err.is_numerical() {
        Ok(err)
    } else {
        Err(err)
    }
}

fn average_record(
    measure: MeasureKind,
    model: &ConditionalModel,
    grid: &GridSpec,
    x: f64,
    y: Option<f64>,
) -> Result<PointRecord> {
    let quad = &model.settings.quadrature;
    let conditional = model.covariate.expect(
        x,
        |w| evaluate(measure, model, MeasurePoint::new(x, y, Some(w))),
        quad,
    );
    let marginal = evaluate(measure, model, MeasurePoint::new(x, y, None));
    let (conditional, marginal) = match (conditional, marginal) {
        (Ok(c), Ok(m)) => (c, m),
        (Err(e), _) | (_, Err(e)) => return Ok(PointRecord::failed(x, y, None, &point_error(e)?)),
    };
    let residual = if measure == MeasureKind::Edf && !model.covariate.is_degenerate() {
        match edf_residual(model, x) {
            Ok(r) => Some(r),
            Err(e) => return Ok(PointRecord::failed(x, y, None, &point_error(e)?)),
        }
    } else {
        None
    };
    let gap = (conditional.value - marginal.value).abs();
    let tolerance = grid.tolerance(marginal.value);
    Ok(PointRecord {
        x,
        y,
        w: None,
        conditional: Some(conditional),
        marginal: Some(marginal),
        gap: Some(gap),
        tolerance: Some(tolerance),
        within: gap <= tolerance,
        residual,
        error: None,
    })
}

fn classify(points: &[PointRecord], success: Classification) -> Classification {
    if points.iter().any(|p| p.error.is_some()) {
        Classification::Indeterminate
    } else if points.iter().all(|p| p.within) {
        success
    } else {
        Classification::NotCollapsible
    }
}

fn max_gap<'a>(points: impl Iterator<Item = &'a PointRecord>) -> Option<f64> {
    points.filter_map(|p| p.gap).fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.max(g))))
}

/// Average collapsibility: `E_{W|x}[conditional measure]` against the
/// marginal measure at every grid point.
pub fn check_average(
    measure: MeasureKind,
    model: &ConditionalModel,
    grid: &GridSpec,
) -> Result<CollapsibilityVerdict> {
    grid.validate()?;
    measure.check_capabilities(model)?;
    let mut points = Vec::new();
    for (x, y) in grid.xy_pairs(measure)? {
        points.push(average_record(measure, model, grid, x, y)?);
    }
    let classification = classify(&points, Classification::AverageCollapsible);
    Ok(CollapsibilityVerdict {
        measure,
        check: CheckKind::Average,
        grid: grid.clone(),
        max_average_gap: max_gap(points.iter()),
        max_simple_gap: None,
        points,
        classification,
        reversal_flag: false,
        reversal: None,
        condition_probes: None,
    })
}

/// Simple collapsibility: the conditional measure at every `w` of the grid
/// against the marginal measure. The averaged points are recorded as well,
/// and a failed simple sweep falls back to the average verdict.
pub fn check_simple(
    measure: MeasureKind,
    model: &ConditionalModel,
    grid: &GridSpec,
) -> Result<CollapsibilityVerdict> {
    if grid.w_points.is_empty() {
        return Err(Error::params("a simple-collapsibility check needs w points"));
    }
    let average = check_average(measure, model, grid)?;
    let mut simple = Vec::new();
    for rec in average.average_points() {
        let (x, y) = (rec.x, rec.y);
        for &w in &grid.w_points {
            let Some(marginal) = rec.marginal else {
                simple.push(PointRecord::failed(x, y, Some(w), &Error::Evaluation("marginal unavailable".into())));
                continue;
            };
            match evaluate(measure, model, MeasurePoint::new(x, y, Some(w))) {
                Ok(c) => {
                    let gap = (c.value - marginal.value).abs();
                    let tolerance = grid.tolerance(marginal.value);
                    simple.push(PointRecord {
                        x,
                        y,
                        w: Some(w),
                        conditional: Some(c),
                        marginal: Some(marginal),
                        gap: Some(gap),
                        tolerance: Some(tolerance),
                        within: gap <= tolerance,
                        residual: None,
                        error: None,
                    });
                }
                Err(e) => simple.push(PointRecord::failed(x, y, Some(w), &point_error(e)?)),
            }
        }
    }
    let simple_class = classify(&simple, Classification::SimpleCollapsible);
    let classification = match (average.classification, simple_class) {
        (Classification::Indeterminate, _) | (_, Classification::Indeterminate) => {
            Classification::Indeterminate
        }
        (Classification::AverageCollapsible, Classification::SimpleCollapsible) => {
            Classification::SimpleCollapsible
        }
        (avg, _) => avg,
    };
    let max_simple_gap = max_gap(simple.iter());
    let mut points = average.points;
    points.extend(simple);
    Ok(CollapsibilityVerdict {
        check: CheckKind::Simple,
        points,
        classification,
        max_simple_gap,
        ..average
    })
}

/// `∫ E(Y|x,w) ∂f(w|x)/∂x dw`; the marginal EDF is the averaged conditional
/// EDF plus this term.
pub fn edf_residual(model: &ConditionalModel, x: f64) -> Result<EstimatedReal> {
    MeasureKind::Edf.check_capabilities(model)?;
    let mut inner = 0f64;
    let r = model.covariate.expect_dx(
        x,
        model.x_domain,
        |w| {
            let m = model.conditional_mean(x, w)?;
            inner = inner.max(m.err_estimate);
            Ok(m.value)
        },
        &model.settings.quadrature,
        &model.settings.diff,
    )?;
    Ok(EstimatedReal::new(r.value, r.err_estimate + inner, r.evaluations))
}

/// The averaged conditional EDF at `x`.
pub fn edf_conditional_average(model: &ConditionalModel, x: f64) -> Result<EstimatedReal> {
    model
        .covariate
        .expect(x, |w| edf(model, x, Some(w)), &model.settings.quadrature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Family, FamilyTag};
    use crate::model::{CovariateLaw, ResponseLaw};
    use crate::numerics::{gauss_hermite_expectation, Interval, QuadratureSpec};

    fn product_mean() -> ConditionalModel {
        ConditionalModel::builder("product")
            .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .response(ResponseLaw::from_mean(|x, w| Ok(x * w)))
            .build()
            .unwrap()
    }

    fn uniform_normal() -> ConditionalModel {
        ConditionalModel::builder("uniform-normal")
            .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .response(ResponseLaw::from_family(FamilyTag::Uniform, |x, w| {
                Family::new(FamilyTag::Uniform, &[0.0, x * x + (w - x) * (w - x)])
            }))
            .x_domain(Interval::positive())
            .build()
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(&[]).validate().is_err());
        assert!(GridSpec::new(&[1.0, 1.0]).validate().is_err());
        assert!(GridSpec::new(&[1.0]).with_tolerances(0.0, 1e-4).validate().is_err());
        assert!(GridSpec::new(&[0.5, 1.0]).with_y(&[0.1]).validate().is_ok());
    }

    #[test]
    fn product_mean_is_not_collapsible() {
        let v = check_average(MeasureKind::Edf, &product_mean(), &GridSpec::new(&[1.0])).unwrap();
        assert_eq!(v.classification, Classification::NotCollapsible);
        let p = &v.points[0];
        assert!((p.conditional.unwrap().value - 1.0).abs() < 1e-6);
        assert!((p.marginal.unwrap().value - 2.0).abs() < 1e-6);
        let (gap, budget) = p.decomposition().unwrap();
        assert!(gap <= budget, "{gap} > {budget}");
    }

    #[test]
    fn product_residual_matches_hermite_oracle() {
        let oracle = gauss_hermite_expectation(|w| w * (w - 1.0), 1.0, 1.0, &QuadratureSpec::gauss_hermite())
            .unwrap()
            .value;
        let r = edf_residual(&product_mean(), 1.0).unwrap();
        assert!((r.value - oracle).abs() < 1e-7 && (oracle - 1.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn uniform_normal_average_but_not_simple() {
        let m = uniform_normal();
        let grid = GridSpec::new(&[0.5, 1.0, 1.5, 2.0]).with_w(&[0.0, 1.0, 2.0]);
        let v = check_simple(MeasureKind::Edf, &m, &grid).unwrap();
        assert_eq!(v.classification, Classification::AverageCollapsible);
        for p in v.average_points() {
            assert!((p.marginal.unwrap().value - p.x).abs() < 1e-5);
            assert!(p.residual.unwrap().value.abs() < 1e-6);
        }
        assert!(v.max_simple_gap.unwrap() > 0.5);
    }

    #[test]
    fn homogeneous_mean_is_simple_collapsible() {
        let m = ConditionalModel::builder("sym")
            .covariate(CovariateLaw::family(|_| Family::gamma(1.0, 2.0)))
            .response(ResponseLaw::from_family(FamilyTag::Uniform, |x, w| {
                Family::new(FamilyTag::Uniform, &[x - w, x + w])
            }))
            .build()
            .unwrap();
        let grid = GridSpec::new(&[0.5, 1.0]).with_w(&[0.5, 2.0]);
        let v = check_simple(MeasureKind::Edf, &m, &grid).unwrap();
        assert_eq!(v.classification, Classification::SimpleCollapsible);
    }

    #[test]
    fn numerical_failure_is_indeterminate() {
        let m = ConditionalModel::builder("blows-up")
            .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .response(ResponseLaw::from_mean(|x, w| {
                if x > 1.9 {
                    Ok(f64::NAN)
                } else {
                    Ok(x + w)
                }
            }))
            .probe_xs(&[1.0])
            .build()
            .unwrap();
        let v = check_average(MeasureKind::Edf, &m, &GridSpec::new(&[1.0, 2.0])).unwrap();
        assert_eq!(v.classification, Classification::Indeterminate);
        assert!(v.points[1].error.is_some());
    }

    #[test]
    fn measure_needing_y_requires_y_points() {
        assert!(check_average(MeasureKind::Ddf, &uniform_normal(), &GridSpec::new(&[1.0])).is_err());
    }
}
