//! Simulation of the linear, logistic, Poisson and negative binomial
//! regression families, conditional and marginal fits, and the
//! coefficient-level average collapsibility check.

mod dataset;
mod fit;
mod linalg;

use alloc::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::collapsibility::Classification;
use crate::distributions::{Family, Seed};
use crate::model::CovariateLaw;
use crate::prelude::*;
use crate::{Error, Result};

pub use dataset::{Dataset, Provenance};
pub use fit::{
    fit_glm, fit_glm_offset, fit_linear, fit_negbin, FitResult, Theta, MAX_ITERATIONS, SEPARATION_FIT,
    SCORE_TOL, SEPARATION_NORM,
};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 0.3;
pub const DEFAULT_THETA: f64 = 2.0;
/// Smallest stratum size for a per-stratum fit.
pub const MIN_STRATUM: usize = 50;
/// Multiple of the combined standard error used as the tolerance.
pub const SE_MULTIPLE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionFamily {
    Linear,
    Logistic,
    Poisson,
    #[serde(rename = "negbin")]
    NegBin,
}

impl RegressionFamily {
    pub const ALL: [RegressionFamily; 4] = [
        RegressionFamily::Linear,
        RegressionFamily::Logistic,
        RegressionFamily::Poisson,
        RegressionFamily::NegBin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressionFamily::Linear => "linear",
            RegressionFamily::Logistic => "logistic",
            RegressionFamily::Poisson => "poisson",
            RegressionFamily::NegBin => "negbin",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name.trim()))
    }
}

/// Conditional coefficients of the linear predictor.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coefficients {
    /// `α + βx + γw`.
    Common { alpha: f64, beta: f64, gamma: f64 },
    /// `α(w) + β(w)x` for the listed levels of a discrete covariate.
    Stratified { levels: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64> },
}

/// A simulated regression study.
///
/// For [`RegressionFamily::NegBin`] the covariate is a multiplicative
/// frailty: `Y | x, w ~ Poisson(e^{α+βx} w)`.
#[derive(Clone, Debug)]
pub struct RegressionSpec {
    pub family: RegressionFamily,
    pub coefficients: Coefficients,
    pub covariate: CovariateLaw,
    pub x_law: Family,
    pub theta: f64,
    pub noise_sd: f64,
}

impl RegressionSpec {
    pub fn new(family: RegressionFamily, coefficients: Coefficients, covariate: CovariateLaw) -> Self {
        Self {
            family,
            coefficients,
            covariate,
            x_law: Family::Normal { mean: 0.0, sd: 1.0 },
            theta: DEFAULT_THETA,
            noise_sd: 1.0,
        }
    }

    /// The command-line study: `α = 0.1`, `β = 0.3`, the given `γ`, and
    /// `W | x ~ N(x, 1)`. The NB family uses the frailty `W ~ G(θ, θ)`.
    pub fn standard(family: RegressionFamily, gamma: f64, theta: f64) -> Self {
        let common = Coefficients::Common {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma,
        };
        match family {
            RegressionFamily::NegBin => Self::new(
                family,
                Coefficients::Common {
                    alpha: DEFAULT_ALPHA,
                    beta: DEFAULT_BETA,
                    gamma: 0.0,
                },
                CovariateLaw::family(move |_| Ok(Family::Gamma { rate: theta, shape: theta })),
            )
            .with_theta(theta),
            _ => Self::new(
                family,
                common,
                CovariateLaw::family(|x| Ok(Family::Normal { mean: x, sd: 1.0 })),
            ),
        }
    }

    pub fn with_x_law(mut self, law: Family) -> Self {
        self.x_law = law;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn discrete_levels(&self) -> Option<&[f64]> {
        match &self.covariate {
            CovariateLaw::Discrete { levels, .. } => Some(levels),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.x_law.validate()?;
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::params("theta must be positive"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::params("noise sd must be positive"));
        }
        match &self.coefficients {
            Coefficients::Common { alpha, beta, gamma } => {
                if ![alpha, beta, gamma].iter().all(|v| v.is_finite()) {
                    return Err(Error::params("coefficients must be finite"));
                }
                if self.family == RegressionFamily::NegBin && *gamma != 0.0 {
                    return Err(Error::params("the negbin frailty enters multiplicatively; gamma must be 0"));
                }
            }
            Coefficients::Stratified { levels, alpha, beta } => {
                if self.family == RegressionFamily::NegBin {
                    return Err(Error::params("negbin studies use common coefficients"));
                }
                if levels.len() != alpha.len() || levels.len() != beta.len() {
                    return Err(Error::params("stratified coefficients need one alpha and beta per level"));
                }
                if self.discrete_levels() != Some(levels.as_slice()) {
                    return Err(Error::params("stratified coefficients need a discrete covariate with the same levels"));
                }
            }
        }
        if let CovariateLaw::Discrete { probs, .. } = &self.covariate {
            for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                let ps = probs.iter().map(|p| p(x)).collect::<Result<Vec<_>>>()?;
                if ps.iter().any(|p| !(*p >= 0.0)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::params(format!("covariate probabilities at x = {x} do not sum to 1")));
                }
            }
        }
        Ok(())
    }

    /// `(α, β)` for the stratum containing `w`, or the common ones.
    fn intercept_slope(&self, w: f64) -> Result<(f64, f64)> {
        match &self.coefficients {
            Coefficients::Common { alpha, beta, gamma } => Ok((alpha + gamma * w, *beta)),
            Coefficients::Stratified { levels, alpha, beta } => levels
                .iter()
                .position(|l| *l == w)
                .map(|i| (alpha[i], beta[i]))
                .ok_or_else(|| Error::params(format!("w = {w} is not a declared level"))),
        }
    }

    /// Linear predictor `η(x, w)`.
    pub fn linear_predictor(&self, x: f64, w: f64) -> Result<f64> {
        let (a, b) = self.intercept_slope(w)?;
        Ok(a + b * x)
    }

    /// `E(Y | x, w)`.
    pub fn conditional_mean(&self, x: f64, w: f64) -> Result<f64> {
        let eta = self.linear_predictor(x, w)?;
        Ok(match self.family {
            RegressionFamily::Linear => eta,
            RegressionFamily::Logistic => 1.0 / (1.0 + (-eta).exp()),
            RegressionFamily::Poisson => eta.exp(),
            RegressionFamily::NegBin => eta.exp() * w,
        })
    }

    /// Conditional slope `β(w)` in the scale of the link.
    pub fn conditional_slope(&self, w: f64) -> Result<f64> {
        Ok(self.intercept_slope(w)?.1)
    }
}

/// Draws `n` records, each as `x`, then `w | x`, then `y | (x, w)`.
pub fn simulate(spec: &RegressionSpec, n: usize, x_law: &Family, seed: Seed) -> Result<Dataset> {
    spec.validate()?;
    x_law.validate()?;
    if n == 0 {
        return Err(Error::params("n must be at least 1"));
    }
    let mut rng = seed.rng();
    let (mut ys, mut xs, mut ws) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x = x_law.draw(&mut rng);
        let w = spec.covariate.draw(x, &mut rng)?;
        let mean = spec.conditional_mean(x, w)?;
        let y = match spec.family {
            RegressionFamily::Linear => Family::Normal { mean, sd: spec.noise_sd }.draw(&mut rng),
            RegressionFamily::Logistic => f64::from(u8::from(rng.random::<f64>() < mean)),
            RegressionFamily::Poisson | RegressionFamily::NegBin => {
                if mean <= 0.0 {
                    0.0
                } else {
                    let fam = Family::Poisson { mean };
                    fam.validate()?;
                    fam.draw(&mut rng)
                }
            }
        };
        ys.push(y);
        xs.push(x);
        ws.push(w);
    }
    Dataset::new(
        ys,
        xs,
        ws,
        Provenance {
            family: Some(spec.family),
            seed: Some(seed),
            n,
            description: format!("{} regression study", spec.family.name()),
        },
    )
}

/// Conditional fit of `y` given `x` and `w` for continuous covariates.
pub fn fit_conditional(spec: &RegressionSpec, data: &Dataset) -> Result<FitResult> {
    match spec.family {
        RegressionFamily::Linear => fit_linear(data, true),
        RegressionFamily::Logistic | RegressionFamily::Poisson => fit_glm(data, spec.family, true),
        RegressionFamily::NegBin => {
            if data.w.iter().any(|w| *w <= 0.0) {
                return Err(Error::params("the negbin frailty must be positive"));
            }
            let offset: Vec<f64> = data.w.iter().map(|w| w.ln()).collect();
            let mut fit = fit_glm_offset(data, RegressionFamily::Poisson, false, Some(&offset))?;
            fit.family = RegressionFamily::NegBin;
            Ok(fit)
        }
    }
}

/// Marginal fit of `y` on `x` alone.
pub fn fit_marginal(spec: &RegressionSpec, data: &Dataset) -> Result<FitResult> {
    match spec.family {
        RegressionFamily::Linear => fit_linear(data, false),
        RegressionFamily::Logistic | RegressionFamily::Poisson => fit_glm(data, spec.family, false),
        RegressionFamily::NegBin => fit_negbin(data, Theta::Known(spec.theta)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumFit {
    pub level: f64,
    pub n: usize,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientPoint {
    pub x: f64,
    /// `E_{W|x} β(W)`.
    pub conditional_average: f64,
    pub marginal: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub within: bool,
}

/// Coefficient-level average collapsibility verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientVerdict {
    pub family: RegressionFamily,
    pub n: usize,
    pub seed: Seed,
    pub classification: Classification,
    pub points: Vec<CoefficientPoint>,
    pub max_gap: f64,
    /// `E_W β(W)` under the sampled distribution of `X`.
    pub unconditional_average: f64,
    /// Conditional slope and marginal slope are both beyond tolerance of
    /// zero with opposite signs.
    pub reversal_flag: bool,
    pub conditional_fit: Option<FitResult>,
    pub strata: Vec<StratumFit>,
    pub marginal_fit: FitResult,
    /// Largest IRLS score component across all fits.
    pub max_score_norm: f64,
}

/// Simulates `n` records and compares `E_{W|x} β(W)` with the marginal slope
/// at each probe `x`, within `3` combined standard errors.
pub fn check_beta_collapsibility(
    spec: &RegressionSpec,
    n: usize,
    seed: Seed,
    x_probe_points: &[f64],
) -> Result<CoefficientVerdict> {
    if x_probe_points.is_empty() || x_probe_points.iter().any(|x| !x.is_finite()) {
        return Err(Error::params("at least one finite probe x is required"));
    }
    let data = simulate(spec, n, &spec.x_law, seed)?;
    let marginal_fit = fit_marginal(spec, &data)?;
    let b_m = marginal_fit.coefficient("x").unwrap_or(f64::NAN);
    let se_m = marginal_fit.std_error("x").unwrap_or(f64::NAN);
    let mut max_score_norm = marginal_fit.score_norm;

    let mut strata = Vec::new();
    let mut conditional_fit = None;
    // Returns (E_{W|x} β(W), its standard error).
    let average: Arc<dyn Fn(f64) -> Result<(f64, f64)>>;
    let unconditional_average;
    match (&spec.covariate, spec.family) {
        (CovariateLaw::Discrete { levels, probs }, fam) if fam != RegressionFamily::NegBin => {
            for &level in levels {
                let sub = data.stratum(level).filter(|d| d.len() >= MIN_STRATUM).ok_or_else(|| {
                    Error::params(format!("stratum w = {level} has fewer than {MIN_STRATUM} records"))
                })?;
                let fit = match fam {
                    RegressionFamily::Linear => fit_linear(&sub, false)?,
                    _ => fit_glm(&sub, fam, false)?,
                };
                max_score_norm = max_score_norm.max(fit.score_norm);
                strata.push(StratumFit { level, n: sub.len(), fit });
            }
            let slopes: Vec<(f64, f64)> = strata
                .iter()
                .map(|s| (s.fit.coefficient("x").unwrap_or(f64::NAN), s.fit.std_error("x").unwrap_or(f64::NAN)))
                .collect();
            unconditional_average = strata
                .iter()
                .zip(&slopes)
                .map(|(s, (b, _))| b * s.n as f64 / data.len() as f64)
                .sum();
            let probs = probs.clone();
            average = Arc::new(move |x| {
                let mut mean = 0.0;
                let mut var = 0.0;
                for (p, (b, se)) in probs.iter().zip(&slopes) {
                    let q = p(x)?;
                    mean += q * b;
                    var += q * q * se * se;
                }
                Ok((mean, var.sqrt()))
            });
        }
        _ => {
            let fit = fit_conditional(spec, &data)?;
            max_score_norm = max_score_norm.max(fit.score_norm);
            let b = fit.coefficient("x").unwrap_or(f64::NAN);
            let se = fit.std_error("x").unwrap_or(f64::NAN);
            unconditional_average = b;
            conditional_fit = Some(fit);
            average = Arc::new(move |_| Ok((b, se)));
        }
    }

    let mut points = Vec::with_capacity(x_probe_points.len());
    for &x in x_probe_points {
        let (avg, se_c) = average(x)?;
        let gap = (avg - b_m).abs();
        let tolerance = SE_MULTIPLE * (se_c * se_c + se_m * se_m).sqrt();
        points.push(CoefficientPoint {
            x,
            conditional_average: avg,
            marginal: b_m,
            gap,
            tolerance,
            within: gap <= tolerance,
        });
    }
    let max_gap = points.iter().fold(0.0f64, |m, p| m.max(p.gap));
    let classification = if points.iter().all(|p| p.within) {
        Classification::AverageCollapsible
    } else {
        Classification::NotCollapsible
    };
    let reversal_flag = points.iter().any(|p| {
        let se_c = ((p.tolerance / SE_MULTIPLE).powi(2) - se_m * se_m).max(0.0).sqrt();
        p.conditional_average.abs() > SE_MULTIPLE * se_c
            && b_m.abs() > SE_MULTIPLE * se_m
            && p.conditional_average.signum() != b_m.signum()
    });
    Ok(CoefficientVerdict {
        family: spec.family,
        n,
        seed,
        classification,
        points,
        max_gap,
        unconditional_average,
        reversal_flag,
        conditional_fit,
        strata,
        marginal_fit,
        max_score_norm,
    })
}

/// Stratum frequencies among records with `|x_i - x| ≤ 0.25 · range(x)`.
pub fn empirical_stratum_weights(data: &Dataset, levels: &[f64], x: f64) -> Result<Vec<f64>> {
    let (lo, hi) = data
        .x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let half = 0.25 * (hi - lo);
    let mut counts = vec![0usize; levels.len()];
    let mut total = 0usize;
    for i in 0..data.len() {
        if (data.x[i] - x).abs() <= half {
            if let Some(k) = levels.iter().position(|l| *l == data.w[i]) {
                counts[k] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::params(format!("no records near x = {x}")));
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests;
