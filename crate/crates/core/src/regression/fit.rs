//! Ordinary least squares and iteratively reweighted least squares.

use serde::Serialize;

use super::dataset::Dataset;
use super::linalg::{cholesky, cholesky_inverse, cholesky_solve};
use super::RegressionFamily;
use crate::distributions::special::ln_gamma;
use crate::prelude::*;
use crate::{Error, Result};

/// Score threshold for IRLS convergence.
pub const SCORE_TOL: f64 = 1e-8;
/// Iteration cap for IRLS.
pub const MAX_ITERATIONS: usize = 100;
/// Logistic coefficients beyond this size indicate separation.
pub const SEPARATION_NORM: f64 = 1e3;
/// Fitted probabilities this close to the responses on every record mean
/// the classes are separated.
pub const SEPARATION_FIT: f64 = 1e-6;

/// How the NB dispersion is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theta {
    Known(f64),
    Moment,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub family: RegressionFamily,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// Largest absolute score component at the returned coefficients.
    pub score_norm: f64,
    pub n: usize,
    /// NB dispersion used for the fit.
    pub theta: Option<f64>,
    /// Residual standard deviation of a linear fit.
    pub sigma: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.std_errors[i])
    }
}

struct Design {
    cols: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl Design {
    fn new(data: &Dataset, include_w: bool) -> Self {
        let mut cols = vec![vec![1.0; data.len()], data.x.clone()];
        let mut names = vec!["intercept".to_string(), "x".to_string()];
        if include_w {
            cols.push(data.w.clone());
            names.push("w".into());
        }
        Design { cols, names }
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.cols.iter().zip(beta).map(|(c, b)| c[i] * b).sum()
    }

    /// `XᵀWX` and `XᵀWz`.
    fn weighted_normal(&self, w: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.p();
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for j in 0..p {
            for k in 0..=j {
                let s: f64 = (0..w.len()).map(|i| w[i] * self.cols[j][i] * self.cols[k][i]).sum();
                a[j * p + k] = s;
                a[k * p + j] = s;
            }
            b[j] = (0..w.len()).map(|i| w[i] * self.cols[j][i] * z[i]).sum();
        }
        (a, b)
    }
}

/// OLS of `y` on `1, x` and optionally `w`.
pub fn fit_linear(data: &Dataset, include_w: bool) -> Result<FitResult> {
    let design = Design::new(data, include_w);
    let n = data.len();
    let p = design.p();
    if n <= p {
        return Err(Error::RankDeficient);
    }
    let ones = vec![1.0; n];
    let (a, b) = design.weighted_normal(&ones, &data.y);
    let l = cholesky(&a, p)?;
    let beta = cholesky_solve(&l, p, &b);
    let resid: Vec<f64> = (0..n).map(|i| data.y[i] - design.eta(&beta, i)).collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let score_norm = design
        .cols
        .iter()
        .map(|c| c.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let s2 = rss / (n - p) as f64;
    let inv = cholesky_inverse(&l, p);
    let std_errors = (0..p).map(|j| (s2 * inv[j * p + j]).sqrt()).collect();
    let sigma_ml = (rss / n as f64).max(f64::MIN_POSITIVE);
    let log_likelihood = -0.5 * n as f64 * ((2.0 * core::f64::consts::PI * sigma_ml).ln() + 1.0);
    Ok(FitResult {
        family: RegressionFamily::Linear,
        names: design.names,
        coefficients: beta,
        std_errors,
        iterations: 1,
        converged: true,
        log_likelihood,
        score_norm,
        n,
        theta: None,
        sigma: Some(s2.sqrt()),
        warnings: Vec::new(),
    })
}

/// Logistic or Poisson maximum likelihood by IRLS.
pub fn fit_glm(data: &Dataset, family: RegressionFamily, include_w: bool) -> Result<FitResult> {
    fit_glm_offset(data, family, include_w, None)
}

/// [`fit_glm`] with a known additive offset on the linear predictor.
pub fn fit_glm_offset(
    data: &Dataset,
    family: RegressionFamily,
    include_w: bool,
    offset: Option<&[f64]>,
) -> Result<FitResult> {
    let link = match family {
        RegressionFamily::Logistic => Link::Logit,
        RegressionFamily::Poisson => Link::Log { theta: None },
        _ => return Err(Error::params("fit_glm handles the logistic and poisson families")),
    };
    let design = Design::new(data, include_w);
    irls(&design, data, offset, link, family)
}

/// NB regression of `y` on `1, x` with `θ` fixed or estimated by moments.
pub fn fit_negbin(data: &Dataset, theta: Theta) -> Result<FitResult> {
    let design = Design::new(data, false);
    check_counts(&data.y)?;
    let mut warnings = Vec::new();
    let th = match theta {
        Theta::Known(t) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::params("theta must be positive and finite"));
            }
            t
        }
        Theta::Moment => {
            let pois = irls(&design, data, None, Link::Log { theta: None }, RegressionFamily::Poisson)?;
            let (num, den, var) = (0..data.len()).fold((0.0, 0.0, 0.0), |(num, den, var), i| {
                let mu = design.eta(&pois.coefficients, i).exp();
                let r = data.y[i] - mu;
                (num + mu * mu, den + r * r - mu, var + 2.0 * mu * mu + mu)
            });
            if den <= 0.0 {
                return Err(Error::Underdispersed { excess: den / data.len() as f64 });
            }
            let t = num / den;
            // Under Poisson sampling the excess has mean 0 and variance `var`.
            if den < 3.0 * var.sqrt() {
                warnings.push(format!(
                    "moment theta {t:.3e}: variance excess not significant, little or no overdispersion"
                ));
            }
            t
        }
    };
    let mut fit = irls(&design, data, None, Link::Log { theta: Some(th) }, RegressionFamily::NegBin)?;
    fit.theta = Some(th);
    fit.warnings.extend(warnings);
    Ok(fit)
}

#[derive(Clone, Copy)]
enum Link {
    Logit,
    /// Log link; `theta` selects NB weights instead of Poisson ones.
    Log { theta: Option<f64> },
}

impl Link {
    fn mean(self, eta: f64) -> f64 {
        match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Log { .. } => eta.exp(),
        }
    }

    /// IRLS weight and the factor turning `y - μ` into the score contribution.
    fn weight_and_score(self, mu: f64) -> (f64, f64) {
        match self {
            Link::Logit => (mu * (1.0 - mu), 1.0),
            Link::Log { theta: None } => (mu, 1.0),
            Link::Log { theta: Some(t) } => {
                let f = 1.0 / (1.0 + mu / t);
                (mu * f, f)
            }
        }
    }

    fn dmu_deta(self, mu: f64) -> f64 {
        match self {
            Link::Logit => mu * (1.0 - mu),
            Link::Log { .. } => mu,
        }
    }

    fn log_lik(self, y: f64, mu: f64) -> f64 {
        match self {
            Link::Logit => {
                let p = mu.clamp(1e-300, 1.0 - 1e-16);
                y * p.ln() + (1.0 - y) * (1.0 - p).ln()
            }
            Link::Log { theta: None } => y * mu.max(1e-300).ln() - mu - ln_gamma(y + 1.0),
            Link::Log { theta: Some(t) } => {
                ln_gamma(y + t) - ln_gamma(t) - ln_gamma(y + 1.0) + t * (t / (t + mu)).ln()
                    + y * (mu / (t + mu)).max(1e-300).ln()
            }
        }
    }
}

fn check_counts(y: &[f64]) -> Result<()> {
    if y.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
        return Err(Error::params("count responses must be nonnegative integers"));
    }
    Ok(())
}

fn irls(
    design: &Design,
    data: &Dataset,
    offset: Option<&[f64]>,
    link: Link,
    family: RegressionFamily,
) -> Result<FitResult> {
    let n = data.len();
    let p = design.p();
    if n <= p {
        return Err(Error::RankDeficient);
    }
    if let Some(o) = offset {
        if o.len() != n || o.iter().any(|v| !v.is_finite()) {
            return Err(Error::params("offset must be finite with one value per record"));
        }
    }
    let y = &data.y;
    match link {
        Link::Logit => {
            if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::params("logistic responses must be 0 or 1"));
            }
        }
        Link::Log { .. } => check_counts(y)?,
    }
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; p];
    beta[0] = match link {
        Link::Logit => {
            let q = ybar.clamp(0.01, 0.99);
            (q / (1.0 - q)).ln()
        }
        Link::Log { .. } => {
            let mean_off = (0..n).map(off).sum::<f64>() / n as f64;
            (ybar + 0.1).ln() - mean_off
        }
    };

    let state = |beta: &[f64]| -> Result<(f64, Vec<f64>, f64)> {
        let mut ll = 0.0;
        let mut score = vec![0.0; p];
        let mut scale = vec![0.0; p];
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let mu = link.mean(design.eta(beta, i) + off(i));
            if !mu.is_finite() {
                return Err(Error::NonFiniteEvaluation { at: design.eta(beta, i) });
            }
            ll += link.log_lik(y[i], mu);
            let (_, s) = link.weight_and_score(mu);
            for j in 0..p {
                let term = s * (y[i] - mu) * design.cols[j][i];
                score[j] += term;
                scale[j] += term.abs();
            }
        }
        let floor = scale.iter().fold(0.0f64, |m, s| m.max(*s)) * 1e3 * f64::EPSILON;
        Ok((ll, score, floor))
    };

    let mut iterations = 0;
    let (mut ll, mut score, mut floor) = state(&beta)?;
    let mut score_norm = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut converged = score_norm <= SCORE_TOL.max(floor);
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let eta = design.eta(&beta, i);
            let mu = link.mean(eta + off(i));
            let (wi, _) = link.weight_and_score(mu);
            let d = link.dmu_deta(mu).max(1e-300);
            w[i] = wi.max(1e-300);
            z[i] = eta + (y[i] - mu) / d;
        }
        let (a, b) = design.weighted_normal(&w, &z);
        let l = cholesky(&a, p)?;
        let target = cholesky_solve(&l, p, &b);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&target).map(|(b0, t)| b0 + step * (t - b0)).collect();
            let accepted = match state(&trial) {
                Ok((ll_t, score_t, floor_t)) if ll_t >= ll - 1e-9 * ll.abs().max(1.0) || step < 1e-6 => {
                    beta = trial;
                    ll = ll_t;
                    score = score_t;
                    floor = floor_t;
                    true
                }
                Err(e) if step < 1e-6 || !matches!(e, Error::NonFiniteEvaluation { .. }) => return Err(e),
                _ => false,
            };
            if accepted {
                break;
            }
            step *= 0.5;
        }
        if let Link::Logit = link {
            if beta.iter().any(|b| b.abs() > SEPARATION_NORM) {
                return Err(Error::Separation);
            }
        }
        score_norm = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        converged = score_norm <= SCORE_TOL.max(floor);
    }
    if !converged {
        return Err(Error::NotConverged { iterations, score_norm });
    }
    if let Link::Logit = link {
        let perfect = (0..n).all(|i| (y[i] - link.mean(design.eta(&beta, i) + off(i))).abs() < SEPARATION_FIT);
        if perfect {
            return Err(Error::Separation);
        }
    }
    let w: Vec<f64> = (0..n).map(|i| link.weight_and_score(link.mean(design.eta(&beta, i) + off(i))).0).collect();
    let (info, _) = design.weighted_normal(&w, &vec![0.0; n]);
    let l = cholesky(&info, p)?;
    let inv = cholesky_inverse(&l, p);
    let std_errors = (0..p).map(|j| inv[j * p + j].sqrt()).collect();
    Ok(FitResult {
        family,
        names: design.names.clone(),
        coefficients: beta,
        std_errors,
        iterations,
        converged,
        log_likelihood: ll,
        score_norm,
        n,
        theta: None,
        sigma: None,
        warnings: Vec::new(),
    })
}
