//! Densities, distribution functions and seeded samplers for the parametric
//! families used by the models.
//!
//! Gamma laws are parameterized by `(rate, shape)` so that the mean is
//! `shape / rate`. The negative binomial `NB(size, prob)` has pmf
//! `Γ(y+size) / (y! Γ(size)) · prob^size · (1-prob)^y`.

mod sampling;
pub mod special;

pub use sampling::{sample, Seed};

use serde::Serialize;

use crate::numerics::Interval;
use crate::prelude::*;
use crate::{Error, Result};
use special::{gamma_p, gamma_q, ln_gamma, norm_cdf, norm_pdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    Normal,
    Uniform,
    #[serde(rename = "gamma-rate-shape")]
    Gamma,
    Poisson,
    NegativeBinomial,
    Bernoulli,
    TemperedNormal,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 7] = [
        FamilyTag::Normal,
        FamilyTag::Uniform,
        FamilyTag::Gamma,
        FamilyTag::Poisson,
        FamilyTag::NegativeBinomial,
        FamilyTag::Bernoulli,
        FamilyTag::TemperedNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Normal => "normal",
            FamilyTag::Uniform => "uniform",
            FamilyTag::Gamma => "gamma-rate-shape",
            FamilyTag::Poisson => "poisson",
            FamilyTag::NegativeBinomial => "negative-binomial",
            FamilyTag::Bernoulli => "bernoulli",
            FamilyTag::TemperedNormal => "tempered-normal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            FamilyTag::Poisson | FamilyTag::Bernoulli => 1,
            _ => 2,
        }
    }

    /// Parameter names in positional order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FamilyTag::Normal => &["mean", "sd"],
            FamilyTag::Uniform => &["lo", "hi"],
            FamilyTag::Gamma => &["rate", "shape"],
            FamilyTag::Poisson => &["mean"],
            FamilyTag::NegativeBinomial => &["size", "prob"],
            FamilyTag::Bernoulli => &["p"],
            FamilyTag::TemperedNormal => &["center", "lambda"],
        }
    }

    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            FamilyTag::Poisson | FamilyTag::NegativeBinomial | FamilyTag::Bernoulli
        )
    }
}

/// A fully parameterized distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    #[serde(rename = "gamma-rate-shape")]
    Gamma { rate: f64, shape: f64 },
    Poisson { mean: f64 },
    NegativeBinomial { size: f64, prob: f64 },
    Bernoulli { p: f64 },
    /// `φ(w - center + lambda)`: a unit normal shifted left by `lambda`.
    TemperedNormal { center: f64, lambda: f64 },
}

impl Family {
    /// Builds a family from positional parameters, validating them.
    pub fn new(tag: FamilyTag, params: &[f64]) -> Result<Self> {
        if params.len() != tag.arity() {
            return Err(Error::params(format!(
                "{} takes {} parameter(s), got {}",
                tag.name(),
                tag.arity(),
                params.len()
            )));
        }
        let p = |i: usize| params[i];
        let family = match tag {
            FamilyTag::Normal => Family::Normal { mean: p(0), sd: p(1) },
            FamilyTag::Uniform => Family::Uniform { lo: p(0), hi: p(1) },
            FamilyTag::Gamma => Family::Gamma { rate: p(0), shape: p(1) },
            FamilyTag::Poisson => Family::Poisson { mean: p(0) },
            FamilyTag::NegativeBinomial => Family::NegativeBinomial { size: p(0), prob: p(1) },
            FamilyTag::Bernoulli => Family::Bernoulli { p: p(0) },
            FamilyTag::TemperedNormal => Family::TemperedNormal { center: p(0), lambda: p(1) },
        };
        family.validate()?;
        Ok(family)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(FamilyTag::Normal, &[mean, sd])
    }

    pub fn gamma(rate: f64, shape: f64) -> Result<Self> {
        Self::new(FamilyTag::Gamma, &[rate, shape])
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Family::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Family::Gamma { rate, shape } => {
                rate > 0.0 && shape > 0.0 && rate.is_finite() && shape.is_finite()
            }
            Family::Poisson { mean } => mean > 0.0 && mean.is_finite(),
            Family::NegativeBinomial { size, prob } => {
                size > 0.0 && size.is_finite() && prob > 0.0 && prob < 1.0
            }
            Family::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Family::TemperedNormal { center, lambda } => {
                center.is_finite() && lambda > 0.0 && lambda.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::params(format!("invalid parameters for {self:?}")))
        }
    }

    pub fn tag(&self) -> FamilyTag {
        match self {
            Family::Normal { .. } => FamilyTag::Normal,
            Family::Uniform { .. } => FamilyTag::Uniform,
            Family::Gamma { .. } => FamilyTag::Gamma,
            Family::Poisson { .. } => FamilyTag::Poisson,
            Family::NegativeBinomial { .. } => FamilyTag::NegativeBinomial,
            Family::Bernoulli { .. } => FamilyTag::Bernoulli,
            Family::TemperedNormal { .. } => FamilyTag::TemperedNormal,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Normal { mean, sd } => vec![mean, sd],
            Family::Uniform { lo, hi } => vec![lo, hi],
            Family::Gamma { rate, shape } => vec![rate, shape],
            Family::Poisson { mean } => vec![mean],
            Family::NegativeBinomial { size, prob } => vec![size, prob],
            Family::Bernoulli { p } => vec![p],
            Family::TemperedNormal { center, lambda } => vec![center, lambda],
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.tag().is_discrete()
    }

    /// Open interval carrying all of the mass. Discrete families report an
    /// interval around their atoms.
    pub fn support(&self) -> Interval {
        let (lo, hi) = match *self {
            Family::Normal { .. } | Family::TemperedNormal { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            Family::Uniform { lo, hi } => (lo, hi),
            Family::Gamma { .. } => (0.0, f64::INFINITY),
            Family::Poisson { .. } | Family::NegativeBinomial { .. } => (-0.5, f64::INFINITY),
            Family::Bernoulli { .. } => (-0.5, 1.5),
        };
        Interval::new(lo, hi).unwrap_or_else(|_| Interval::real_line())
    }

    /// `(mean, sd)` when the law is normal, used to pick Gauss-Hermite rules.
    pub fn normal_form(&self) -> Option<(f64, f64)> {
        match *self {
            Family::Normal { mean, sd } => Some((mean, sd)),
            Family::TemperedNormal { center, lambda } => Some((center - lambda, 1.0)),
            _ => None,
        }
    }

    /// Density, or probability mass at integer points for discrete families.
    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => norm_pdf((t - mean) / sd) / sd,
            Family::TemperedNormal { center, lambda } => norm_pdf(t - center + lambda),
            Family::Uniform { lo, hi } => {
                if t > lo && t < hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Family::Gamma { .. } => {
                if t > 0.0 {
                    self.ln_pdf(t).exp()
                } else {
                    0.0
                }
            }
            Family::Poisson { .. } | Family::NegativeBinomial { .. } => match count_index(t) {
                Some(_) => self.ln_pdf(t).exp(),
                None => 0.0,
            },
            Family::Bernoulli { p } => match count_index(t) {
                Some(0) => 1.0 - p,
                Some(1) => p,
                _ => 0.0,
            },
        }
    }

    /// Log density (or log mass); `-inf` outside the support.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        match *self {
            Family::Gamma { rate, shape } => {
                if t > 0.0 {
                    shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Poisson { mean } => match count_index(t) {
                Some(k) => {
                    let y = k as f64;
                    y * mean.ln() - mean - ln_gamma(y + 1.0)
                }
                None => f64::NEG_INFINITY,
            },
            Family::NegativeBinomial { size, prob } => match count_index(t) {
                Some(k) => {
                    let y = k as f64;
                    ln_gamma(y + size) - ln_gamma(y + 1.0) - ln_gamma(size)
                        + size * prob.ln()
                        + y * (-prob).ln_1p()
                }
                None => f64::NEG_INFINITY,
            },
            Family::Normal { mean, sd } => {
                let z = (t - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * core::f64::consts::PI).ln()
            }
            Family::TemperedNormal { center, lambda } => {
                let z = t - center + lambda;
                -0.5 * z * z - 0.5 * (2.0 * core::f64::consts::PI).ln()
            }
            _ => self.pdf(t).ln(),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        match *self {
            Family::Normal { mean, sd } => norm_cdf((t - mean) / sd),
            Family::TemperedNormal { center, lambda } => norm_cdf(t - center + lambda),
            Family::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Gamma { rate, shape } => gamma_p(shape, rate * t),
            Family::Poisson { mean } => {
                if t < 0.0 {
                    0.0
                } else {
                    gamma_q(t.floor() + 1.0, mean)
                }
            }
            Family::NegativeBinomial { .. } => {
                if t < 0.0 {
                    return 0.0;
                }
                if t.is_infinite() {
                    return 1.0;
                }
                let mut acc = 0.0;
                let top = t.floor() as u64;
                for k in 0..=top {
                    acc += self.pdf(k as f64);
                    if acc >= 1.0 - f64::EPSILON {
                        return 1.0;
                    }
                }
                acc.min(1.0)
            }
            Family::Bernoulli { p } => {
                if t < 0.0 {
                    0.0
                } else if t < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Family::Normal { mean, .. } => mean,
            Family::TemperedNormal { center, lambda } => center - lambda,
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Gamma { rate, shape } => shape / rate,
            Family::Poisson { mean } => mean,
            Family::NegativeBinomial { size, prob } => size * (1.0 - prob) / prob,
            Family::Bernoulli { p } => p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Family::Normal { sd, .. } => sd * sd,
            Family::TemperedNormal { .. } => 1.0,
            Family::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Family::Gamma { rate, shape } => shape / (rate * rate),
            Family::Poisson { mean } => mean,
            Family::NegativeBinomial { size, prob } => size * (1.0 - prob) / (prob * prob),
            Family::Bernoulli { p } => p * (1.0 - p),
        }
    }

    /// One draw from the law.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sampling::draw(self, rng)
    }
}

fn count_index(t: f64) -> Option<u64> {
    if t >= 0.0 && t.fract() == 0.0 && t < 9.0e15 {
        Some(t as u64)
    } else {
        None
    }
}

/// Validated density or mass evaluation.
pub fn pdf_or_pmf(family: &Family, point: f64) -> Result<f64> {
    family.validate()?;
    Ok(family.pdf(point))
}

/// Validated distribution function evaluation.
pub fn cdf(family: &Family, point: f64) -> Result<f64> {
    family.validate()?;
    Ok(family.cdf(point))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let n = Family::normal(0.0, 1.0).unwrap();
        assert!((n.pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(n.cdf(0.0), 0.5);
    }

    #[test]
    fn geometric_case_of_negative_binomial() {
        let nb = Family::new(FamilyTag::NegativeBinomial, &[1.0, 0.5]).unwrap();
        assert!((nb.pdf(0.0) - 0.5).abs() < 1e-15);
        assert!((nb.pdf(1.0) - 0.25).abs() < 1e-15);
        assert_eq!(nb.pdf(1.5), 0.0);
    }

    #[test]
    fn negative_binomial_reference_value() {
        let nb = Family::new(FamilyTag::NegativeBinomial, &[2.3, 0.4]).unwrap();
        assert!((nb.pdf(7.0) - 0.044_575_251_203_768_6).abs() < 1e-14);
        let far = Family::new(FamilyTag::NegativeBinomial, &[2.0, 0.3]).unwrap();
        assert!(far.pdf(200.0).is_finite() && far.pdf(200.0) > 0.0);
    }

    #[test]
    fn tempered_normal_is_shifted_unit_normal() {
        let t = Family::new(FamilyTag::TemperedNormal, &[1.0, 0.5]).unwrap();
        for w in [-1.0, 0.3, 2.0] {
            assert!((t.pdf(w) - norm_pdf(w - 1.0 + 0.5)).abs() < 1e-16);
        }
        assert_eq!(t.normal_form(), Some((0.5, 1.0)));
    }

    #[test]
    fn uniform_cdf_is_linear() {
        let c = 1.0 + 0.25;
        let u = Family::new(FamilyTag::Uniform, &[0.0, c]).unwrap();
        assert!((u.cdf(0.5) - 0.5 / c).abs() < 1e-15);
        assert_eq!(u.cdf(-1.0), 0.0);
        assert_eq!(u.cdf(2.0), 1.0);
    }

    #[test]
    fn gamma_reference_values() {
        let g = Family::gamma(2.0, 3.0).unwrap();
        assert!((g.pdf(1.1) - 0.536_287_286_473_696).abs() < 1e-14);
        assert_eq!(g.cdf(f64::INFINITY), 1.0);
        assert_eq!(g.mean(), 1.5);
    }

    #[test]
    fn poisson_cdf_reference_value() {
        let p = Family::new(FamilyTag::Poisson, &[2.5]).unwrap();
        assert!((p.cdf(3.0) - 0.757_576_133_133_066).abs() < 1e-14);
        assert!((p.cdf(3.7) - p.cdf(3.0)).abs() < 1e-16);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Family::normal(0.0, 0.0).is_err());
        assert!(Family::new(FamilyTag::Uniform, &[1.0, 1.0]).is_err());
        assert!(Family::new(FamilyTag::NegativeBinomial, &[1.0, 1.0]).is_err());
        assert!(Family::new(FamilyTag::Bernoulli, &[1.1]).is_err());
        assert!(Family::new(FamilyTag::Poisson, &[1.0, 2.0]).is_err());
        assert!(pdf_or_pmf(&Family::Gamma { rate: -1.0, shape: 1.0 }, 1.0).is_err());
    }

    #[test]
    fn tag_names_round_trip() {
        for tag in FamilyTag::ALL {
            assert_eq!(FamilyTag::from_name(tag.name()), Some(tag));
            assert_eq!(tag.param_names().len(), tag.arity());
        }
    }
}
