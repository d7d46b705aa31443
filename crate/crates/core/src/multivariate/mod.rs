//! A two-component covariate `W = (W1, W2)` with `W1 ⊥ W2 | X`.
//!
//! Expectations over `W` are iterated one-dimensional quadratures against
//! `f(w1|x) f(w2|x)`.

mod probes;

pub use probes::{
    probe_conditions_bivariate, A_X_INDEP_W2, A_Y_INDEP_W1_GIVEN_XW2, B_X_INDEP_W2_GIVEN_Y,
    bivariate_implications, B_Y_INDEP_W1_GIVEN_X, STANDING_W1_INDEP_W2, SWAPPED_X_INDEP_W1_GIVEN_Y, SWAPPED_Y_INDEP_W2_GIVEN_X,
};

use alloc::sync::Arc;

use serde::Serialize;

use crate::collapsibility::{
    Classification, CheckKind, CollapsibilityVerdict, GridSpec, PointRecord, DEFAULT_TOL_ABS,
    DEFAULT_TOL_REL,
};
use crate::measures::{derivative, mixed_log_derivative, MeasureKind};
use crate::model::{
    ConditionalModel, CovariateLaw, NumericSettings, ResponseLaw, SupportRule, DEFAULT_PROBE_XS,
    REGISTRATION_TOL,
};
use crate::numerics::{try_integrate_with, EstimatedReal, Hint, Interval};
use crate::prelude::*;
use crate::{Error, Result};

/// `E(Y|x,w1,w2)`.
pub type MeanFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>;
/// `f(y|x,w1,w2)`.
pub type DensityFn = Arc<dyn Fn(f64, f64, f64, f64) -> Result<f64> + Send + Sync>;
/// A declared joint covariate density `f(w1,w2|x)`, called as `(w1, w2, x)`.
pub type JointCovariateFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>;

/// Sup-norm tolerance of the registration-time product check.
pub const FACTORIZATION_TOL: f64 = 1e-4;

#[derive(Clone)]
pub struct BivariateCovariateModel {
    pub name: String,
    pub w1: CovariateLaw,
    pub w2: CovariateLaw,
    pub mean: Option<MeanFn>,
    pub density: Option<DensityFn>,
    pub y_support: Interval,
    pub x_domain: Interval,
    pub settings: NumericSettings,
    /// Sup deviation of the declared joint from the product at registration.
    pub factorization_deviation: f64,
    probe_xs: Vec<f64>,
}

impl core::fmt::Debug for BivariateCovariateModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BivariateCovariateModel")
            .field("name", &self.name)
            .field("w1", &self.w1)
            .field("w2", &self.w2)
            .field("x_domain", &self.x_domain)
            .finish()
    }
}

pub struct BivariateBuilder {
    name: String,
    w1: Option<CovariateLaw>,
    w2: Option<CovariateLaw>,
    mean: Option<MeanFn>,
    density: Option<DensityFn>,
    y_support: Interval,
    x_domain: Interval,
    settings: NumericSettings,
    joint: Option<JointCovariateFn>,
    probe_xs: Vec<f64>,
}

impl BivariateBuilder {
    pub fn w1(mut self, law: CovariateLaw) -> Self {
        self.w1 = Some(law);
        self
    }

    pub fn w2(mut self, law: CovariateLaw) -> Self {
        self.w2 = Some(law);
        self
    }

    pub fn mean<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        self.mean = Some(Arc::new(f));
        self
    }

    pub fn density<F>(mut self, f: F, support: Interval) -> Self
    where
        F: Fn(f64, f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        self.density = Some(Arc::new(f));
        self.y_support = support;
        self
    }

    /// Declares the joint law of `(W1, W2)` given `x`; registration fails
    /// unless it is the product of the two component laws.
    pub fn declared_joint<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        self.joint = Some(Arc::new(f));
        self
    }

    pub fn x_domain(mut self, domain: Interval) -> Self {
        self.x_domain = domain;
        self
    }

    pub fn settings(mut self, settings: NumericSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn probe_xs(mut self, xs: &[f64]) -> Self {
        self.probe_xs = xs.to_vec();
        self
    }

    pub fn build(self) -> Result<BivariateCovariateModel> {
        let w1 = self.w1.ok_or_else(|| Error::params("a law for W1 is required"))?;
        let w2 = self.w2.ok_or_else(|| Error::params("a law for W2 is required"))?;
        if self.mean.is_none() && self.density.is_none() {
            return Err(Error::params("the response needs a conditional mean or density"));
        }
        if self.probe_xs.is_empty() || self.probe_xs.iter().any(|x| !self.x_domain.contains(*x)) {
            return Err(Error::params("probe points must lie inside the x domain"));
        }
        let quad = &self.settings.quadrature;
        let mut deviation = 0f64;
        for &x in &self.probe_xs {
            for (label, law) in [("W1", &w1), ("W2", &w2)] {
                let mass = law.total_mass(x, quad)?.value;
                if (mass - 1.0).abs() > REGISTRATION_TOL {
                    return Err(Error::params(format!("law of {label} has mass {mass} at x={x}")));
                }
            }
            if let Some(joint) = &self.joint {
                for a in w1.probe_points(x)? {
                    for b in w2.probe_points(x)? {
                        let product = w1.density(a, x, quad)? * w2.density(b, x, quad)?;
                        deviation = deviation.max((joint(a, b, x)? - product).abs());
                    }
                }
            }
        }
        if deviation > FACTORIZATION_TOL {
            return Err(Error::FactorizationViolated { deviation });
        }
        Ok(BivariateCovariateModel {
            name: self.name,
            w1,
            w2,
            mean: self.mean,
            density: self.density,
            y_support: self.y_support,
            x_domain: self.x_domain,
            settings: self.settings,
            factorization_deviation: deviation,
            probe_xs: self.probe_xs,
        })
    }
}

/// Which component is integrated first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    W1Inner,
    W2Inner,
}

impl BivariateCovariateModel {
    pub fn builder(name: impl Into<String>) -> BivariateBuilder {
        BivariateBuilder {
            name: name.into(),
            w1: None,
            w2: None,
            mean: None,
            density: None,
            y_support: Interval::real_line(),
            x_domain: Interval::real_line(),
            settings: NumericSettings::default(),
            joint: None,
            probe_xs: DEFAULT_PROBE_XS.to_vec(),
        }
    }

    pub fn probe_xs(&self) -> &[f64] {
        &self.probe_xs
    }

    /// `E[g(W1, W2) | x]` as an iterated integral.
    pub fn expect<G>(&self, x: f64, order: Order, mut g: G) -> Result<EstimatedReal>
    where
        G: FnMut(f64, f64) -> Result<EstimatedReal>,
    {
        let quad = &self.settings.quadrature;
        match order {
            Order::W1Inner => self.w2.expect(x, |b| self.w1.expect(x, |a| g(a, b), quad), quad),
            Order::W2Inner => self.w1.expect(x, |a| self.w2.expect(x, |b| g(a, b), quad), quad),
        }
    }

    pub fn conditional_mean(&self, x: f64, w1: f64, w2: f64) -> Result<EstimatedReal> {
        if let Some(m) = &self.mean {
            let v = m(x, w1, w2)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteEvaluation { at: x });
            }
            return Ok(EstimatedReal::exact(v));
        }
        try_integrate_with(
            |y| Ok(y * self.conditional_density(y, x, w1, w2)?),
            self.y_support,
            &Hint::default(),
            &self.settings.quadrature,
        )
    }

    pub fn conditional_density(&self, y: f64, x: f64, w1: f64, w2: f64) -> Result<f64> {
        let f = self
            .density
            .as_ref()
            .ok_or_else(|| Error::missing(format!("conditional density of `{}`", self.name)))?;
        if !self.y_support.contains(y) {
            return Ok(0.0);
        }
        let v = f(y, x, w1, w2)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { at: y });
        }
        Ok(v)
    }

    pub fn marginal_mean(&self, x: f64) -> Result<EstimatedReal> {
        self.expect(x, Order::W1Inner, |a, b| self.conditional_mean(x, a, b))
    }

    pub fn marginal_density(&self, y: f64, x: f64) -> Result<EstimatedReal> {
        self.expect(x, Order::W1Inner, |a, b| {
            Ok(EstimatedReal::exact(self.conditional_density(y, x, a, b)?))
        })
    }

    fn measure(&self, kind: MeasureKind, x: f64, y: Option<f64>, w: Option<(f64, f64)>) -> Result<EstimatedReal> {
        let diff = &self.settings.diff;
        match kind {
            MeasureKind::Edf => derivative(
                |t| match w {
                    Some((a, b)) => self.conditional_mean(t, a, b),
                    None => self.marginal_mean(t),
                },
                x,
                self.x_domain,
                diff,
            ),
            MeasureKind::Mdi => {
                let y = y.ok_or_else(|| Error::params("the MDI needs a y value"))?;
                if self.density.is_none() {
                    return Err(Error::missing(format!("conditional density of `{}`", self.name)));
                }
                mixed_log_derivative(
                    |t, s| match w {
                        Some((a, b)) => Ok(EstimatedReal::exact(self.conditional_density(s, t, a, b)?)),
                        None => self.marginal_density(s, t),
                    },
                    x,
                    y,
                    self.x_domain,
                    self.y_support,
                    diff,
                )
            }
            other => Err(Error::params(format!(
                "bivariate checks cover the EDF and the MDI, not the {}",
                other.name()
            ))),
        }
    }

    /// The conditional measure at `(x, y, w1, w2)`.
    pub fn conditional_measure(
        &self,
        kind: MeasureKind,
        x: f64,
        y: Option<f64>,
        w1: f64,
        w2: f64,
    ) -> Result<EstimatedReal> {
        self.measure(kind, x, y, Some((w1, w2)))
    }

    /// The marginal measure at `(x, y)`.
    pub fn marginal_measure(&self, kind: MeasureKind, x: f64, y: Option<f64>) -> Result<EstimatedReal> {
        self.measure(kind, x, y, None)
    }

    /// With `W1` a point mass, the univariate model of `(Y, X, W2)`. The
    /// conditional measures agree only when the atom does not move with `x`.
    pub fn reduce_degenerate_w1(&self) -> Result<ConditionalModel> {
        let CovariateLaw::PointMass(v) = &self.w1 else {
            return Err(Error::params("reduction needs a point-mass W1"));
        };
        let mut response = match (&self.mean, &self.density) {
            (_, Some(d)) => {
                let (d, v) = (d.clone(), v.clone());
                ResponseLaw::from_density(
                    move |y, x, w| d(y, x, v(x)?, w),
                    SupportRule::fixed(self.y_support),
                )
            }
            (Some(m), None) => {
                let (m, v) = (m.clone(), v.clone());
                ResponseLaw::from_mean(move |x, w| m(x, v(x)?, w))
            }
            (None, None) => unreachable!("validated at build"),
        };
        if let (Some(m), Some(_)) = (&self.mean, &self.density) {
            let (m, v) = (m.clone(), v.clone());
            response = response.with_mean(move |x, w| m(x, v(x)?, w));
        }
        ConditionalModel::builder(format!("{}|w1", self.name))
            .covariate(self.w2.clone())
            .response(response)
            .x_domain(self.x_domain)
            .settings(self.settings)
            .probe_xs(&self.probe_xs)
            .build()
    }
}

/// Grid of a bivariate check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitCovariateGrid {
    pub x_points: Vec<f64>,
    pub y_points: Vec<f64>,
    pub w1_points: Vec<f64>,
    pub w2_points: Vec<f64>,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl SplitCovariateGrid {
    pub fn new(x_points: &[f64]) -> Self {
        Self {
            x_points: x_points.to_vec(),
            y_points: Vec::new(),
            w1_points: Vec::new(),
            w2_points: Vec::new(),
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
        }
    }

    pub fn with_y(mut self, y: &[f64]) -> Self {
        self.y_points = y.to_vec();
        self
    }

    pub fn with_w(mut self, w1: &[f64], w2: &[f64]) -> Self {
        self.w1_points = w1.to_vec();
        self.w2_points = w2.to_vec();
        self
    }

    /// The univariate grid over `x` and `y`, with `w2_points` as `w`.
    pub fn as_grid(&self) -> GridSpec {
        GridSpec {
            x_points: self.x_points.clone(),
            y_points: self.y_points.clone(),
            w_points: self.w2_points.clone(),
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.as_grid().validate()?;
        GridSpec::new(&self.x_points).with_w(&self.w1_points).validate()
    }
}

/// A collapsibility verdict over `W = (W1, W2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BivariateVerdict {
    pub verdict: CollapsibilityVerdict,
    pub split: SplitCovariateGrid,
    /// Largest change of the averaged conditional measure when the order of
    /// the two integrations is swapped, and the summed error estimates.
    pub fubini_gap: f64,
    pub fubini_budget: f64,
}

/// Average collapsibility over `W = (W1, W2)`.
pub fn check_average_bivariate(
    measure: MeasureKind,
    model: &BivariateCovariateModel,
    grid: &SplitCovariateGrid,
) -> Result<BivariateVerdict> {
    if !matches!(measure, MeasureKind::Edf | MeasureKind::Mdi) {
        return Err(Error::params(format!(
            "bivariate checks cover the EDF and the MDI, not the {}",
            measure.name()
        )));
    }
    grid.validate()?;
    let flat = grid.as_grid();
    let mut points = Vec::new();
    let (mut fubini_gap, mut fubini_budget) = (0f64, 0f64);
    for (x, y) in flat.xy_pairs(measure)? {
        let cond = |order| {
            model.expect(x, order, |a, b| model.conditional_measure(measure, x, y, a, b))
        };
        let result = (|| -> Result<(EstimatedReal, EstimatedReal, EstimatedReal)> {
            Ok((cond(Order::W1Inner)?, cond(Order::W2Inner)?, model.marginal_measure(measure, x, y)?))
        })();
        match result {
            Ok((c, swapped, m)) => {
                fubini_gap = fubini_gap.max((c.value - swapped.value).abs());
                fubini_budget = fubini_budget.max(c.err_estimate + swapped.err_estimate);
                let gap = (c.value - m.value).abs();
                let tolerance = flat.tolerance(m.value);
                points.push(PointRecord {
                    x,
                    y,
                    w: None,
                    conditional: Some(c),
                    marginal: Some(m),
                    gap: Some(gap),
                    tolerance: Some(tolerance),
                    within: gap <= tolerance,
                    residual: None,
                    error: None,
                });
            }
            Err(e) if e.is_numerical() => points.push(PointRecord {
                x,
                y,
                w: None,
                conditional: None,
                marginal: None,
                gap: None,
                tolerance: None,
                within: false,
                residual: None,
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let classification = if points.iter().any(|p| p.error.is_some()) {
        Classification::Indeterminate
    } else if points.iter().all(|p| p.within) {
        Classification::AverageCollapsible
    } else {
        Classification::NotCollapsible
    };
    let max_average_gap = points.iter().filter_map(|p| p.gap).reduce(f64::max);
    Ok(BivariateVerdict {
        verdict: CollapsibilityVerdict {
            measure,
            check: CheckKind::Average,
            grid: flat,
            points,
            classification,
            max_average_gap,
            max_simple_gap: None,
            reversal_flag: false,
            reversal: None,
            condition_probes: None,
        },
        split: grid.clone(),
        fubini_gap,
        fubini_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapsibility::check_average;
    use crate::distributions::Family;

    fn additive(broken: bool) -> BivariateCovariateModel {
        BivariateCovariateModel::builder(if broken { "broken" } else { "bivariate" })
            .w1(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .w2(CovariateLaw::family(move |x| {
                Family::normal(if broken { x } else { 0.0 }, 1.0)
            }))
            .mean(|x, _, w2| Ok(x + w2))
            .build()
            .unwrap()
    }

    #[test]
    fn independent_w2_is_collapsible() {
        let grid = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]);
        let v = check_average_bivariate(MeasureKind::Edf, &additive(false), &grid).unwrap();
        assert_eq!(v.verdict.classification, Classification::AverageCollapsible);
        for p in &v.verdict.points {
            assert!((p.marginal.unwrap().value - 1.0).abs() < 1e-5);
            assert!((p.conditional.unwrap().value - 1.0).abs() < 1e-5);
        }
        assert!(v.fubini_gap <= v.fubini_budget.max(1e-12));
    }

    #[test]
    fn dependent_w2_breaks_collapsibility() {
        let grid = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]);
        let v = check_average_bivariate(MeasureKind::Edf, &additive(true), &grid).unwrap();
        assert_eq!(v.verdict.classification, Classification::NotCollapsible);
        for p in &v.verdict.points {
            assert!((p.gap.unwrap() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn declared_joint_must_factorize() {
        let err = BivariateCovariateModel::builder("correlated")
            .w1(CovariateLaw::family(|_| Family::normal(0.0, 1.0)))
            .w2(CovariateLaw::family(|_| Family::normal(0.0, 1.0)))
            .mean(|x, a, b| Ok(x + a + b))
            .declared_joint(|a, b, _| {
                let rho: f64 = 0.5;
                let q = (a * a - 2.0 * rho * a * b + b * b) / (1.0 - rho * rho);
                Ok((-0.5 * q).exp() / (2.0 * core::f64::consts::PI * (1.0 - rho * rho).sqrt()))
            })
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::FactorizationViolated { .. }));
    }

    #[test]
    fn degenerate_w1_reduces_to_univariate() {
        let m = BivariateCovariateModel::builder("point-w1")
            .w1(CovariateLaw::point_mass(|_| Ok(0.5)))
            .w2(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .mean(|x, a, b| Ok(x * b + a * a * x))
            .build()
            .unwrap();
        let grid = SplitCovariateGrid::new(&[0.5, 1.0, 2.0]);
        let bi = check_average_bivariate(MeasureKind::Edf, &m, &grid).unwrap();
        let uni = check_average(MeasureKind::Edf, &m.reduce_degenerate_w1().unwrap(), &grid.as_grid()).unwrap();
        assert_eq!(bi.verdict.classification, uni.classification);
        for (a, b) in bi.verdict.points.iter().zip(uni.average_points()) {
            assert!((a.gap.unwrap() - b.gap.unwrap()).abs() < 1e-8);
        }
    }
}
