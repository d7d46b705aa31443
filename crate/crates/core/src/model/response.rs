use alloc::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::distributions::{Family, FamilyTag};
use crate::numerics::Interval;
use crate::prelude::*;
use crate::{Error, Result};

/// A function of `(x, w)`.
pub type XwFn = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;
/// A function of `(y, x, w)`.
pub type YxwFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>;
/// Draws `Y` given `(x, w)`.
pub type SamplerFn = Arc<dyn Fn(f64, f64, &mut ChaCha8Rng) -> Result<f64> + Send + Sync>;
/// Location and scale of `Y` given `(x, w)`, used to place quadrature.
pub type LocateFn = Arc<dyn Fn(f64, f64) -> Result<(f64, f64)> + Send + Sync>;

#[derive(Clone)]
pub enum Bound {
    Fixed(f64),
    Param(XwFn),
}

impl Bound {
    pub fn at(&self, x: f64, w: f64) -> Result<f64> {
        match self {
            Bound::Fixed(v) => Ok(*v),
            Bound::Param(f) => f(x, w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportKind {
    FixedInterval,
    ParametricInterval,
}

/// Where `Y` lives given `(x, w)`.
///
/// `envelope` is a fixed interval containing every conditional support and
/// is the domain of marginal `y`-quantities. With `truncate` set, densities
/// vanish outside the conditional support; without it the density formula is
/// used on the whole envelope.
#[derive(Clone)]
pub struct SupportRule {
    pub lower: Bound,
    pub upper: Bound,
    pub envelope: Interval,
    pub truncate: bool,
}

impl SupportRule {
    pub fn fixed(interval: Interval) -> Self {
        Self {
            lower: Bound::Fixed(interval.lower()),
            upper: Bound::Fixed(interval.upper()),
            envelope: interval,
            truncate: true,
        }
    }

    pub fn real_line() -> Self {
        Self::fixed(Interval::real_line())
    }

    pub fn parametric(lower: Bound, upper: Bound, envelope: Interval) -> Self {
        Self {
            lower,
            upper,
            envelope,
            truncate: true,
        }
    }

    pub fn with_truncation(mut self, truncate: bool) -> Self {
        self.truncate = truncate;
        self
    }

    pub fn kind(&self) -> SupportKind {
        match (&self.lower, &self.upper) {
            (Bound::Fixed(_), Bound::Fixed(_)) => SupportKind::FixedInterval,
            _ => SupportKind::ParametricInterval,
        }
    }

    /// Conditional support at `(x, w)`.
    pub fn interval(&self, x: f64, w: f64) -> Result<Interval> {
        let lo = self.lower.at(x, w)?;
        let hi = self.upper.at(x, w)?;
        Interval::new(lo, hi).map_err(|_| {
            Error::params(format!(
                "empty response support ({lo}, {hi}) at x={x}, w={w}"
            ))
        })
    }

    /// Interval on which the density formula is used at `(x, w)`.
    pub fn effective(&self, x: f64, w: f64) -> Result<Interval> {
        if self.truncate {
            self.interval(x, w)
        } else {
            Ok(self.envelope)
        }
    }
}

/// The conditional law of `Y` given `(x, w)`; at least one of `mean` and
/// `density` is present.
#[derive(Clone)]
pub struct ResponseLaw {
    pub mean: Option<XwFn>,
    pub density: Option<YxwFn>,
    pub cdf: Option<YxwFn>,
    pub support: SupportRule,
    pub sampler: Option<SamplerFn>,
    pub locate: Option<LocateFn>,
}

impl ResponseLaw {
    pub fn from_mean<F>(mean: F) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            mean: Some(Arc::new(mean)),
            density: None,
            cdf: None,
            support: SupportRule::real_line(),
            sampler: None,
            locate: None,
        }
    }

    pub fn from_density<F>(density: F, support: SupportRule) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            mean: None,
            density: Some(Arc::new(density)),
            cdf: None,
            support,
            sampler: None,
            locate: None,
        }
    }

    /// Mean, density, distribution function, support and sampler all taken
    /// from a parametric family whose parameters depend on `(x, w)`.
    pub fn from_family<F>(tag: FamilyTag, family: F) -> Self
    where
        F: Fn(f64, f64) -> Result<Family> + Send + Sync + 'static,
    {
        let family: Arc<dyn Fn(f64, f64) -> Result<Family> + Send + Sync> = Arc::new(family);
        let checked = {
            let family = family.clone();
            move |x: f64, w: f64| -> Result<Family> {
                let f = family(x, w)?;
                f.validate()?;
                Ok(f)
            }
        };
        let checked: Arc<dyn Fn(f64, f64) -> Result<Family> + Send + Sync> = Arc::new(checked);
        let envelope = match tag {
            FamilyTag::Gamma => Interval::positive(),
            FamilyTag::Poisson | FamilyTag::NegativeBinomial => Family::Poisson { mean: 1.0 }.support(),
            FamilyTag::Bernoulli => Family::Bernoulli { p: 0.5 }.support(),
            _ => Interval::real_line(),
        };
        let support = match tag {
            FamilyTag::Uniform => {
                let lo = checked.clone();
                let hi = checked.clone();
                SupportRule::parametric(
                    Bound::Param(Arc::new(move |x, w| Ok(lo(x, w)?.support().lower()))),
                    Bound::Param(Arc::new(move |x, w| Ok(hi(x, w)?.support().upper()))),
                    envelope,
                )
            }
            _ => SupportRule::fixed(envelope),
        };
        let (m, d, c, s, l) = (checked.clone(), checked.clone(), checked.clone(), checked.clone(), checked);
        Self {
            mean: Some(Arc::new(move |x, w| Ok(m(x, w)?.mean()))),
            density: Some(Arc::new(move |y, x, w| Ok(d(x, w)?.pdf(y)))),
            cdf: Some(Arc::new(move |y, x, w| Ok(c(x, w)?.cdf(y)))),
            support,
            sampler: Some(Arc::new(move |x, w, rng| Ok(s(x, w)?.draw(rng)))),
            locate: Some(Arc::new(move |x, w| {
                let f = l(x, w)?;
                Ok((f.mean(), f.variance().sqrt()))
            })),
        }
    }

    pub fn with_support(mut self, support: SupportRule) -> Self {
        self.support = support;
        self
    }

    pub fn with_mean<F>(mut self, mean: F) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        self.mean = Some(Arc::new(mean));
        self
    }

    pub fn with_cdf<F>(mut self, cdf: F) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        self.cdf = Some(Arc::new(cdf));
        self
    }

    pub fn with_sampler<F>(mut self, sampler: F) -> Self
    where
        F: Fn(f64, f64, &mut ChaCha8Rng) -> Result<f64> + Send + Sync + 'static,
    {
        self.sampler = Some(Arc::new(sampler));
        self
    }
}
