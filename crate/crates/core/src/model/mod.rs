//! Conditional models: the covariate law `f(w|x)` together with the mean,
//! density and distribution function of `Y` given `(x, w)`, and the
//! marginal quantities obtained by integrating over `W`.

mod covariate;
mod homogeneity;
mod joint;
mod response;

pub use covariate::{CovariateLaw, FamilyFn, WxFn, XFn, WEIGHT_FLOOR};
pub use homogeneity::{HomogeneityKind, HomogeneityReport, HOMOGENEITY_TOL};
pub use joint::{condition_from_joint, JointDensityFn, JointDensitySpec, JointDiagnostics};
pub use response::{Bound, LocateFn, ResponseLaw, SamplerFn, SupportKind, SupportRule, XwFn, YxwFn};

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::numerics::{try_integrate_with, DiffSpec, EstimatedReal, Hint, Interval, QuadratureSpec};
use crate::prelude::*;
use crate::{Error, Result};

/// Probe abscissae used for registration-time checks.
pub const DEFAULT_PROBE_XS: [f64; 3] = [0.75, 1.0, 1.5];
/// Tolerance of the registration-time checks.
pub const REGISTRATION_TOL: f64 = 1e-6;
/// Count series stop once this much mass has been accumulated.
pub const COUNT_MASS: f64 = 1.0 - 1e-10;
const COUNT_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum YKind {
    Continuous,
    Binary,
    Count,
}

/// Numerical settings used by every derived quantity of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NumericSettings {
    pub quadrature: QuadratureSpec,
    pub diff: DiffSpec,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec {
                abs_tol: 1e-12,
                rel_tol: 1e-11,
                ..QuadratureSpec::default()
            },
            diff: DiffSpec {
                base_step: 1e-3,
                richardson_levels: 2,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub mean: bool,
    pub density: bool,
    pub cdf: bool,
    pub sampler: bool,
}

#[derive(Clone)]
pub struct ConditionalModel {
    pub name: String,
    pub covariate: CovariateLaw,
    pub response: ResponseLaw,
    pub y_kind: YKind,
    pub x_domain: Interval,
    pub settings: NumericSettings,
    probe_xs: Vec<f64>,
}

impl core::fmt::Debug for ConditionalModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ConditionalModel")
            .field("name", &self.name)
            .field("covariate", &self.covariate)
            .field("y_kind", &self.y_kind)
            .field("x_domain", &self.x_domain)
            .field("capabilities", &self.capabilities())
            .finish()
    }
}

pub struct ModelBuilder {
    name: String,
    covariate: Option<CovariateLaw>,
    response: Option<ResponseLaw>,
    y_kind: YKind,
    x_domain: Interval,
    settings: NumericSettings,
    probe_xs: Option<Vec<f64>>,
}

impl ModelBuilder {
    pub fn covariate(mut self, law: CovariateLaw) -> Self {
        self.covariate = Some(law);
        self
    }

    pub fn response(mut self, law: ResponseLaw) -> Self {
        self.response = Some(law);
        self
    }

    pub fn y_kind(mut self, kind: YKind) -> Self {
        self.y_kind = kind;
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
        self.probe_xs = Some(xs.to_vec());
        self
    }

    /// Assembles the model and runs the registration checks: the covariate
    /// law has unit mass and, when both are given, the mean agrees with the
    /// first moment of the density, at every probe `x`.
    pub fn build(self) -> Result<ConditionalModel> {
        let covariate = self
            .covariate
            .ok_or_else(|| Error::params("a covariate law is required"))?;
        let response = self
            .response
            .ok_or_else(|| Error::params("a response law is required"))?;
        if response.mean.is_none() && response.density.is_none() {
            return Err(Error::params(
                "the response law needs a conditional mean or a conditional density",
            ));
        }
        self.settings.quadrature.validate()?;
        self.settings.diff.validate()?;
        let probe_xs = match self.probe_xs {
            Some(xs) => xs,
            None => default_probes(self.x_domain),
        };
        if probe_xs.is_empty() || probe_xs.iter().any(|x| !self.x_domain.contains(*x)) {
            return Err(Error::params("probe points must lie inside the x domain"));
        }
        let model = ConditionalModel {
            name: self.name,
            covariate,
            response,
            y_kind: self.y_kind,
            x_domain: self.x_domain,
            settings: self.settings,
            probe_xs,
        };
        model.validate()?;
        Ok(model)
    }
}

fn default_probes(domain: Interval) -> Vec<f64> {
    let inside: Vec<f64> = DEFAULT_PROBE_XS
        .iter()
        .copied()
        .filter(|x| domain.contains(*x))
        .collect();
    if !inside.is_empty() {
        return inside;
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => vec![lo + 0.25 * (hi - lo), lo + 0.5 * (hi - lo), lo + 0.75 * (hi - lo)],
        (true, false) => vec![lo + 0.5, lo + 1.0, lo + 2.0],
        (false, true) => vec![hi - 2.0, hi - 1.0, hi - 0.5],
        (false, false) => DEFAULT_PROBE_XS.to_vec(),
    }
}

impl ConditionalModel {
    pub fn builder(name: impl Into<String>) -> ModelBuilder {
        ModelBuilder {
            name: name.into(),
            covariate: None,
            response: None,
            y_kind: YKind::Continuous,
            x_domain: Interval::real_line(),
            settings: NumericSettings::default(),
            probe_xs: None,
        }
    }

    pub fn probe_xs(&self) -> &[f64] {
        &self.probe_xs
    }

    pub fn capabilities(&self) -> Capabilities {
        Capabilities {
            mean: self.response.mean.is_some(),
            density: self.response.density.is_some(),
            cdf: self.response.cdf.is_some() || self.response.density.is_some(),
            sampler: self.response.sampler.is_some(),
        }
    }

    /// Same model with different numerical settings.
    pub fn with_settings(&self, settings: NumericSettings) -> Self {
        let mut m = self.clone();
        m.settings = settings;
        m
    }

    fn quad(&self) -> &QuadratureSpec {
        &self.settings.quadrature
    }

    fn validate(&self) -> Result<()> {
        for &x in &self.probe_xs {
            let mass = self.covariate.total_mass(x, self.quad())?;
            if (mass.value - 1.0).abs() > REGISTRATION_TOL {
                return Err(Error::params(format!(
                    "covariate law of `{}` has mass {} at x={x}",
                    self.name, mass.value
                )));
            }
            if let (Some(mean), Some(_)) = (&self.response.mean, &self.response.density) {
                if !self.response.support.truncate {
                    continue;
                }
                for w in self.probe_ws(x)? {
                    let direct = mean(x, w)?;
                    let from_density = self.mean_from_density(x, w)?;
                    let tol = REGISTRATION_TOL * direct.abs().max(1.0);
                    if (direct - from_density.value).abs() > tol {
                        return Err(Error::params(format!(
                            "mean {direct} and density first moment {} disagree at x={x}, w={w}",
                            from_density.value
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// A few representative covariate values at `x`.
    pub fn probe_ws(&self, x: f64) -> Result<Vec<f64>> {
        self.covariate.probe_points(x)
    }

    fn density_fn(&self) -> Result<&YxwFn> {
        self.response
            .density
            .as_ref()
            .ok_or_else(|| Error::missing(format!("conditional density of `{}`", self.name)))
    }

    /// `f(y|x,w)`, zero outside the effective support.
    pub fn conditional_density(&self, y: f64, x: f64, w: f64) -> Result<f64> {
        let f = self.density_fn()?;
        let sup = self.response.support.effective(x, w)?;
        let inside = match self.y_kind {
            YKind::Continuous => sup.contains(y),
            _ => y >= sup.lower() && y <= sup.upper(),
        };
        if !inside {
            return Ok(0.0);
        }
        let v = f(y, x, w)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { at: y });
        }
        Ok(v)
    }

    fn y_hint(&self, x: f64, w: f64) -> Hint {
        match self.response.locate.as_ref().map(|l| l(x, w)) {
            Some(Ok((c, s))) if c.is_finite() && s.is_finite() && s > 0.0 => Hint::centered(c, s),
            _ => Hint::default(),
        }
    }

    fn mean_from_density(&self, x: f64, w: f64) -> Result<EstimatedReal> {
        match self.y_kind {
            YKind::Continuous => {
                let sup = self.response.support.effective(x, w)?;
                try_integrate_with(
                    |y| Ok(y * self.conditional_density(y, x, w)?),
                    sup,
                    &self.y_hint(x, w),
                    self.quad(),
                )
            }
            YKind::Binary => Ok(EstimatedReal::exact(self.conditional_density(1.0, x, w)?)),
            YKind::Count => {
                let (mean, _, mass, terms) = count_moments(|k| self.conditional_density(k, x, w))?;
                Ok(EstimatedReal::new(mean, (1.0 - mass) * mean.max(1.0), terms))
            }
        }
    }

    /// `E(Y|x,w)` from the mean closure, else from the density.
    pub fn conditional_mean(&self, x: f64, w: f64) -> Result<EstimatedReal> {
        match &self.response.mean {
            Some(m) => {
                let v = m(x, w)?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteEvaluation { at: x });
                }
                Ok(EstimatedReal::exact(v))
            }
            None => self.mean_from_density(x, w),
        }
    }

    /// `F(y|x,w)` from the distribution-function closure, else from the density.
    pub fn conditional_cdf(&self, y: f64, x: f64, w: f64) -> Result<EstimatedReal> {
        if let Some(c) = &self.response.cdf {
            return Ok(EstimatedReal::exact(c(y, x, w)?));
        }
        self.density_fn()?;
        let sup = self.response.support.effective(x, w)?;
        match self.y_kind {
            YKind::Continuous => {
                if y <= sup.lower() {
                    return Ok(EstimatedReal::exact(0.0));
                }
                let top = y.min(sup.upper());
                let dom = match Interval::new(sup.lower(), top) {
                    Ok(d) => d,
                    Err(_) => return Ok(EstimatedReal::exact(0.0)),
                };
                try_integrate_with(
                    |t| self.conditional_density(t, x, w),
                    dom,
                    &self.y_hint(x, w),
                    self.quad(),
                )
            }
            YKind::Binary | YKind::Count => {
                if y < 0.0 {
                    return Ok(EstimatedReal::exact(0.0));
                }
                let top = y.floor() as u64;
                let mut acc = 0.0;
                for k in 0..=top.min(COUNT_LIMIT) {
                    acc += self.conditional_density(k as f64, x, w)?;
                    if acc >= COUNT_MASS && y.is_infinite() {
                        break;
                    }
                }
                Ok(EstimatedReal::new(acc.min(1.0), f64::EPSILON * (top as f64 + 1.0), top as usize + 1))
            }
        }
    }

    pub fn covariate_density(&self, w: f64, x: f64) -> Result<f64> {
        self.covariate.density(w, x, self.quad())
    }

    /// `E(Y|x) = ∫ E(Y|x,w) f(w|x) dw`.
    pub fn marginal_mean(&self, x: f64) -> Result<EstimatedReal> {
        self.covariate.expect(x, |w| self.conditional_mean(x, w), self.quad())
    }

    /// `f(y|x) = ∫ f(y|x,w) f(w|x) dw`.
    pub fn marginal_density(&self, y: f64, x: f64) -> Result<EstimatedReal> {
        self.density_fn()?;
        self.covariate.expect_value(x, |w| self.conditional_density(y, x, w), self.quad())
    }

    /// `F(y|x) = ∫ F(y|x,w) f(w|x) dw`.
    pub fn marginal_cdf(&self, y: f64, x: f64) -> Result<EstimatedReal> {
        if self.response.cdf.is_none() {
            self.density_fn()?;
        }
        self.covariate.expect(x, |w| self.conditional_cdf(y, x, w), self.quad())
    }

    /// `P(Y = k | x)` for count or binary responses.
    pub fn marginal_pmf(&self, k: u64, x: f64) -> Result<EstimatedReal> {
        if self.y_kind == YKind::Continuous {
            return Err(Error::missing("probability mass function of a continuous response"));
        }
        self.marginal_density(k as f64, x)
    }

    /// Mean, variance and accumulated mass of the marginal count law at `x`,
    /// summing the marginal pmf until the mass reaches [`COUNT_MASS`].
    pub fn marginal_count_moments(&self, x: f64) -> Result<CountMoments> {
        if self.y_kind == YKind::Continuous {
            return Err(Error::missing("count moments of a continuous response"));
        }
        let (mean, variance, mass, terms) =
            count_moments(|k| Ok(self.marginal_pmf(k as u64, x)?.value))?;
        Ok(CountMoments {
            mean,
            variance,
            mass,
            terms,
        })
    }

    /// One draw of `(w, y)` given `x`.
    pub fn draw(&self, x: f64, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
        let sampler = self
            .response
            .sampler
            .as_ref()
            .ok_or_else(|| Error::missing(format!("response sampler of `{}`", self.name)))?;
        let w = self.covariate.draw(x, rng)?;
        let y = sampler(x, w, rng)?;
        Ok((w, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CountMoments {
    pub mean: f64,
    pub variance: f64,
    pub mass: f64,
    pub terms: usize,
}

fn count_moments<F>(mut pmf: F) -> Result<(f64, f64, f64, usize)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    let mut k = 0u64;
    while mass < COUNT_MASS {
        if k >= COUNT_LIMIT {
            return Err(Error::NonConvergence {
                subdivisions: k as usize,
                value: mass,
                err_estimate: 1.0 - mass,
            });
        }
        let p = pmf(k as f64)?;
        let kf = k as f64;
        mass += p;
        m1 += kf * p;
        m2 += kf * kf * p;
        k += 1;
    }
    Ok((m1, m2 - m1 * m1, mass, k as usize))
}
