//! Reference models with closed-form truths, and a runner that checks each
//! model's expected verdicts and values against the numeric pipeline.

pub mod models;
mod runners;

use alloc::sync::Arc;
use core::fmt::Write;

use serde::Serialize;

use crate::collapsibility::{CollapsibilityVerdict, ProbeReport};
use crate::distributions::special::{ln_gamma, norm_pdf};
use crate::distributions::Seed;
use crate::model::{NumericSettings, ConditionalModel, JointDensitySpec};
use crate::multivariate::{BivariateCovariateModel, BivariateVerdict};
use crate::prelude::*;
use crate::regression::{CoefficientVerdict, RegressionSpec};
use crate::{Error, Result};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// A closed-form reference value of the model.
    Reference,
    /// Worked out analytically and cross-checked by an independent oracle.
    Computed,
    /// Holds by construction.
    Structural,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Reference => "reference",
            Provenance::Computed => "computed",
            Provenance::Structural => "structural",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Indeterminate,
    Fail,
}

/// An expected outcome of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectedCheck {
    pub check: &'static str,
    pub expected: &'static str,
    pub provenance: Provenance,
}

const fn expect(check: &'static str, expected: &'static str, provenance: Provenance) -> ExpectedCheck {
    ExpectedCheck { check, expected, provenance }
}

/// A named ground-truth formula.
type ClosedFormFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ClosedForm {
    pub name: &'static str,
    pub args: &'static [&'static str],
    f: ClosedFormFn,
}

impl core::fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

impl ClosedForm {
    fn new<F>(name: &'static str, args: &'static [&'static str], f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name, args, f: Arc::new(f) }
    }

    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.args.len() {
            return Err(Error::params(format!(
                "{} takes {} argument(s), got {}",
                self.name,
                self.args.len(),
                args.len()
            )));
        }
        Ok((self.f)(args))
    }
}

#[derive(Clone, Debug)]
pub enum ScenarioModel {
    Conditional(ConditionalModel),
    /// Conditioned numerically when the scenario runs.
    Joint(JointDensitySpec),
    Bivariate(BivariateCovariateModel),
    Regression(RegressionSpec),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Vec<(&'static str, f64)>,
    pub model: ScenarioModel,
    pub closed_forms: Vec<ClosedForm>,
    pub expected: Vec<ExpectedCheck>,
    /// Whether results depend on the seed.
    pub stochastic: bool,
}

impl Scenario {
    pub fn closed_form(&self, name: &str) -> Result<&ClosedForm> {
        self.closed_forms
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::params(format!("{} has no closed form `{name}`", self.name)))
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Settings a run may override.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunOptions {
    pub seed: Seed,
    pub x_points: Option<Vec<f64>>,
    pub y_points: Option<Vec<f64>>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    /// Tempering shift of `power_density_tempered`.
    pub lambda: Option<f64>,
    /// Dispersion of `nb_regression`.
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Sample size of stochastic scenarios.
    pub n: Option<usize>,
    #[serde(skip)]
    pub settings: Option<NumericSettings>,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed: Seed(seed), ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub expected: String,
    pub provenance: Provenance,
    pub observed: String,
    pub gap: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub description: String,
    pub seed: Seed,
    pub parameters: Vec<(String, f64)>,
    pub checks: Vec<CheckRecord>,
    pub verdicts: Vec<CollapsibilityVerdict>,
    pub bivariate: Vec<BivariateVerdict>,
    pub coefficient: Option<CoefficientVerdict>,
    pub probes: Option<ProbeReport>,
    /// Values reported for information only.
    pub notes: Vec<String>,
    pub status: CheckStatus,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.check == name)
    }
}

pub const SCENARIO_NAMES: [&str; 12] = [
    "uniform_normal",
    "homogeneous_uniform",
    "homogeneous_gamma",
    "power_density",
    "power_density_tempered",
    "poisson_gamma",
    "nb_regression",
    "product_mean",
    "cochran_reversal",
    "xwy_chain",
    "bivariate_w",
    "bivariate_w_broken",
];

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_COCHRAN_N: usize = 100_000;

/// Name of the check every probing scenario carries: no condition that
/// guarantees collapsibility passes while the corresponding check fails.
pub const IMPLICATION_CHECK: &str = "probe-implication-consistency";

/// Every scenario with its default parameters.
pub fn catalog() -> Result<Vec<Scenario>> {
    SCENARIO_NAMES
        .iter()
        .map(|n| scenario(n, &RunOptions::default()))
        .collect()
}

fn nb_pmf(k: f64, size: f64, prob: f64) -> f64 {
    (ln_gamma(k + size) - ln_gamma(size) - ln_gamma(k + 1.0) + size * prob.ln() + k * (1.0 - prob).ln()).exp()
}

/// The named scenario, built with the parameters in `opts`.
pub fn scenario(name: &str, opts: &RunOptions) -> Result<Scenario> {
    use Provenance::{Computed, Reference, Structural};
    let alpha = opts.alpha.unwrap_or(crate::regression::DEFAULT_ALPHA);
    let beta = opts.beta.unwrap_or(crate::regression::DEFAULT_BETA);
    let implication = expect(IMPLICATION_CHECK, "no passing condition with a failing check", Reference);
    let mut s = match name {
        "uniform_normal" => Scenario {
            name: "uniform_normal",
            description: "Y|x,w ~ U(0, x²+(w-x)²), W|x ~ N(x,1): EDF average collapsible though neither sufficient condition holds",
            parameters: vec![],
            model: ScenarioModel::Conditional(models::uniform_normal()?),
            closed_forms: vec![
                ClosedForm::new("marginal_mean", &["x"], |a| 0.5 * (a[0] * a[0] + 1.0)),
                ClosedForm::new("marginal_edf", &["x"], |a| a[0]),
                ClosedForm::new("conditional_average_edf", &["x"], |a| a[0]),
                ClosedForm::new("conditional_edf", &["x", "w"], |a| 2.0 * a[0] - a[1]),
                ClosedForm::new("edf_residual", &["x"], |_| 0.0),
            ],
            expected: vec![
                expect("edf-average-collapsible", "AverageCollapsible", Reference),
                expect("edf-marginal-closed-form", "marginal EDF = x within 1e-5", Computed),
                expect("edf-conditional-average-closed-form", "E_{W|x} EDF = x within 1e-5", Computed),
                expect("edf-residual-vanishes", "|residual| <= 1e-6", Reference),
                expect("decomposition-identity", "marginal = conditional average + residual within error estimates", Computed),
                expect("marginal-mean-closed-form", "E(Y|x) = (x²+1)/2 within 1e-8", Computed),
                expect("sufficient-conditions-fail", "mean homogeneity and covariate independence both fail", Reference),
                implication,
            ],
            stochastic: false,
        },
        "homogeneous_uniform" => Scenario {
            name: "homogeneous_uniform",
            description: "Y|x,w ~ U(x-w, x+w), W ~ G(rate 1, shape 2): E(Y|x,w) = x free of w",
            parameters: vec![],
            model: ScenarioModel::Conditional(models::homogeneous_uniform()?),
            closed_forms: vec![
                ClosedForm::new("conditional_mean", &["x", "w"], |a| a[0]),
                ClosedForm::new("marginal_mean", &["x"], |a| a[0]),
                ClosedForm::new("marginal_edf", &["x"], |_| 1.0),
            ],
            expected: vec![
                expect("edf-simple-collapsible", "SimpleCollapsible", Reference),
                expect("edf-marginal-closed-form", "marginal EDF = 1 within 1e-5", Computed),
                expect("mean-homogeneity-passes", "mean-homogeneous-in-w passes", Reference),
                expect("y-depends-on-w", "y-independent-of-w-given-x fails", Reference),
                implication,
            ],
            stochastic: false,
        },
        "homogeneous_gamma" => Scenario {
            name: "homogeneous_gamma",
            description: "W|x ~ G(rate x, shape 1), Y|x,w ~ G(rate w, shape wx): E(Y|x,w) = x",
            parameters: vec![],
            model: ScenarioModel::Conditional(models::homogeneous_gamma()?),
            closed_forms: vec![
                ClosedForm::new("conditional_mean", &["x", "w"], |a| a[0]),
                ClosedForm::new("marginal_edf", &["x"], |_| 1.0),
            ],
            expected: vec![
                expect("conditional-mean-closed-form", "E(Y|x,w) = x within 1e-8", Reference),
                expect("edf-simple-collapsible", "SimpleCollapsible", Reference),
                expect("edf-marginal-closed-form", "marginal EDF = 1 within 1e-5", Computed),
                expect("mean-homogeneity-passes", "mean-homogeneous-in-w passes", Reference),
                implication,
            ],
            stochastic: false,
        },
        "power_density" | "power_density_tempered" => {
            let tempered = name == "power_density_tempered";
            let lambda = if tempered { opts.lambda.unwrap_or(DEFAULT_LAMBDA) } else { 0.0 };
            if !lambda.is_finite() {
                return Err(Error::params("lambda must be finite"));
            }
            let l2 = lambda * lambda;
            let mut expected = vec![
                expect("mdi-average-collapsible", "AverageCollapsible", Reference),
                expect("mdi-equals-inverse-y", "conditional average and marginal MDI = 1/y within 1e-3", Reference),
                expect(
                    "marginal-density-closed-form",
                    if tempered { "f(y|x) = x y^(x-1) (x²+λ²+1) within 1e-4 at safe points" } else { "f(y|x) = x y^(x-1) (x²+1) within 1e-4 at safe points" },
                    Reference,
                ),
            ];
            if !tempered {
                expected.push(expect("y-slope-condition-passes", "log-density-y-slope-matches-marginal passes", Reference));
                expected.push(expect("y-depends-on-w", "y-independent-of-w-given-x fails", Reference));
            }
            expected.push(implication);
            Scenario {
                name: if tempered { "power_density_tempered" } else { "power_density" },
                description: if tempered {
                    "f(y|x,w) = x y^(x-1) (x²+(w-x)²) with tempered normal W|x: f(y|x) = x y^(x-1) (x²+λ²+1)"
                } else {
                    "f(y|x,w) = x y^(x-1) (x²+(w-x)²), W|x ~ N(x,1): MDI = 1/y on both sides"
                },
                parameters: if tempered { vec![("lambda", lambda)] } else { vec![] },
                model: ScenarioModel::Conditional(models::power_density(lambda, false)?),
                closed_forms: vec![
                    ClosedForm::new("marginal_density", &["y", "x"], move |a| {
                        a[1] * a[0].powf(a[1] - 1.0) * (a[1] * a[1] + l2 + 1.0)
                    }),
                    ClosedForm::new("mdi", &["y", "x"], |a| 1.0 / a[0]),
                    ClosedForm::new("truncation_tail", &["y", "x"], |a| models::power_truncation_tail(a[0], a[1])),
                ],
                expected,
                stochastic: false,
            }
        }
        "poisson_gamma" => Scenario {
            name: "poisson_gamma",
            description: "Y|x,w ~ Poisson(λ(x) w), W|x ~ G(rate x, shape x), λ(x) = e^(α+βx): Y|x ~ NB(x, x/(x+λ(x)))",
            parameters: vec![("alpha", alpha), ("beta", beta)],
            model: ScenarioModel::Conditional(models::poisson_gamma(alpha, beta)?),
            closed_forms: vec![
                ClosedForm::new("marginal_pmf", &["y", "x"], move |a| {
                    let l = (alpha + beta * a[1]).exp();
                    nb_pmf(a[0], a[1], a[1] / (a[1] + l))
                }),
                ClosedForm::new("marginal_mean", &["x"], move |a| (alpha + beta * a[0]).exp()),
                ClosedForm::new("led", &["x"], move |_| beta),
            ],
            expected: vec![
                expect("marginal-pmf-closed-form", "mixture pmf = NB pmf within 1e-8 for x in {1,2}, y in 0..=50", Reference),
                expect("led-average-collapsible", "AverageCollapsible", Reference),
                expect("led-equals-beta", "conditional average and marginal LED = β within 1e-6", Reference),
                expect("edf-average-collapsible", "AverageCollapsible", Computed),
                implication,
            ],
            stochastic: false,
        },
        "nb_regression" => {
            let theta = opts.theta.unwrap_or(crate::regression::DEFAULT_THETA);
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(Error::params("theta must be positive"));
            }
            Scenario {
                name: "nb_regression",
                description: "Y|x,w ~ Poisson(λ(x) w), W ~ G(θ, θ) free of x: Y|x ~ NB(θ, θ/(θ+λ(x)))",
                parameters: vec![("alpha", alpha), ("beta", beta), ("theta", theta)],
                model: ScenarioModel::Conditional(models::nb_regression(alpha, beta, theta)?),
                closed_forms: vec![
                    ClosedForm::new("marginal_pmf", &["y", "x"], move |a| {
                        let l = (alpha + beta * a[1]).exp();
                        nb_pmf(a[0], theta, theta / (theta + l))
                    }),
                    ClosedForm::new("marginal_mean", &["x"], move |a| (alpha + beta * a[0]).exp()),
                    ClosedForm::new("marginal_variance", &["x"], move |a| {
                        let l = (alpha + beta * a[0]).exp();
                        l * (1.0 + l / theta)
                    }),
                    ClosedForm::new("led", &["x"], move |_| beta),
                ],
                expected: vec![
                    expect("marginal-pmf-closed-form", "mixture pmf = NB pmf within 1e-8 for x in {0,1}, y in 0..=50", Reference),
                    expect("variance-identity", "Var(Y|x) = λ(1+λ/θ) within 1e-6 and exceeds the mean", Reference),
                    expect("led-average-collapsible", "AverageCollapsible", Computed),
                    expect("led-equals-beta", "conditional average and marginal LED = β within 1e-6", Computed),
                    expect("edf-average-collapsible", "AverageCollapsible", Computed),
                    expect("covariate-independence-passes", "covariate-free-of-x passes", Structural),
                    implication,
                ],
                stochastic: false,
            }
        }
        "product_mean" => Scenario {
            name: "product_mean",
            description: "E(Y|x,w) = x w, W|x ~ N(x,1): negative control, marginal EDF 2x against conditional average x",
            parameters: vec![],
            model: ScenarioModel::Conditional(models::product_mean()?),
            closed_forms: vec![
                ClosedForm::new("marginal_mean", &["x"], |a| a[0] * a[0]),
                ClosedForm::new("marginal_edf", &["x"], |a| 2.0 * a[0]),
                ClosedForm::new("conditional_average_edf", &["x"], |a| a[0]),
                ClosedForm::new("gap", &["x"], |a| a[0].abs()),
            ],
            expected: vec![
                expect("edf-not-collapsible", "NotCollapsible", Computed),
                expect("edf-gap-equals-x", "|marginal - conditional average| = |x| within 1e-5", Computed),
                expect("decomposition-identity", "marginal = conditional average + residual within error estimates", Computed),
                implication,
            ],
            stochastic: false,
        },
        "cochran_reversal" => {
            let n = opts.n.unwrap_or(DEFAULT_COCHRAN_N);
            Scenario {
                name: "cochran_reversal",
                description: "Y = X - W + ε, W = 2X + ε': conditional slope +1, marginal slope -1",
                parameters: vec![("n", n as f64)],
                model: ScenarioModel::Regression(models::cochran_spec()),
                closed_forms: vec![
                    ClosedForm::new("conditional_slope", &[], |_| 1.0),
                    ClosedForm::new("marginal_slope", &[], |_| -1.0),
                ],
                expected: vec![
                    expect("population-reversal-flagged", "reversal detected on the population model", Reference),
                    expect("edf-not-collapsible", "NotCollapsible", Computed),
                    expect("population-slopes", "conditional EDF = 1 and marginal EDF = -1 within 1e-5", Computed),
                    expect("ols-conditional-slope", "fitted conditional slope within 3 SE of 1", Computed),
                    expect("ols-marginal-slope", "fitted marginal slope within 3 SE of -1", Computed),
                    expect("coefficient-reversal-flagged", "coefficient check NotCollapsible with reversal", Computed),
                    implication,
                ],
                stochastic: true,
            }
        }
        "xwy_chain" => Scenario {
            name: "xwy_chain",
            description: "joint density φ(y) φ(x-y) φ(w-y) on a cube: X and W independent given Y",
            parameters: vec![("box_half_width", models::CHAIN_BOX)],
            model: ScenarioModel::Joint(models::xwy_chain()),
            closed_forms: vec![
                ClosedForm::new("conditional_density", &["y", "x", "w"], |a| {
                    let sd = (1.0f64 / 3.0).sqrt();
                    norm_pdf((a[0] - (a[1] + a[2]) / 3.0) / sd) / sd
                }),
                ClosedForm::new("covariate_density", &["w", "x"], |a| {
                    let sd = 1.5f64.sqrt();
                    norm_pdf((a[0] - a[1] / 2.0) / sd) / sd
                }),
                ClosedForm::new("mdi", &["y", "x"], |_| 1.0),
            ],
            expected: vec![
                expect("x-w-independence-given-y-passes", "x-independent-of-w-given-y passes with deviation < 1e-4", Reference),
                expect("mdi-average-collapsible", "AverageCollapsible", Reference),
                expect("mdi-closed-form", "conditional average and marginal MDI = 1 within 1e-3", Computed),
                expect("conditional-laws-closed-form", "f(y|x,w) and f(w|x) match the Gaussian conditionals within 1e-6", Computed),
                expect("joint-mass", "joint mass not flagged", Structural),
                implication,
            ],
            stochastic: false,
        },
        "bivariate_w" | "bivariate_w_broken" => {
            let broken = name == "bivariate_w_broken";
            let expected = if broken {
                vec![
                    expect("edf-not-collapsible", "NotCollapsible", Computed),
                    expect("edf-gap-one", "|marginal - conditional average| = 1 within 1e-4", Reference),
                    expect("covariate-independence-fails", "x-independent-of-w2 fails", Computed),
                    expect("fubini-consistency", "integration order changes the average within error estimates", Structural),
                    implication,
                ]
            } else {
                vec![
                    expect("edf-average-collapsible", "AverageCollapsible", Reference),
                    expect("edf-equals-one", "conditional average and marginal EDF = 1 within 1e-5", Reference),
                    expect("conditions-a-pass", "w1-independent-of-w2, y-independent-of-w1 and x-independent-of-w2 pass", Computed),
                    expect("fubini-consistency", "integration order changes the average within error estimates", Structural),
                    implication,
                ]
            };
            Scenario {
                name: if broken { "bivariate_w_broken" } else { "bivariate_w" },
                description: if broken {
                    "Y|x,w ~ N(x+w2,1), W1|x ~ N(x,1), W2|x ~ N(x,1): marginal EDF 2"
                } else {
                    "Y|x,w ~ N(x+w2,1), W1|x ~ N(x,1), W2 ~ N(0,1): EDF 1 on both sides"
                },
                parameters: vec![],
                model: ScenarioModel::Bivariate(models::bivariate_w(broken)?),
                closed_forms: vec![
                    ClosedForm::new("conditional_edf", &["x", "w1", "w2"], |_| 1.0),
                    ClosedForm::new("marginal_edf", &["x"], move |_| if broken { 2.0 } else { 1.0 }),
                    ClosedForm::new("marginal_mean", &["x"], move |a| if broken { 2.0 * a[0] } else { a[0] }),
                ],
                expected,
                stochastic: false,
            }
        }
        other => return Err(Error::UnknownScenario(other.into())),
    };
    if let Some(settings) = opts.settings {
        s.model = match s.model {
            ScenarioModel::Conditional(m) => ScenarioModel::Conditional(m.with_settings(settings)),
            ScenarioModel::Joint(mut j) => {
                j.settings = settings;
                ScenarioModel::Joint(j)
            }
            other => other,
        };
    }
    Ok(s)
}

/// Runs every expected check of the named scenario.
pub fn run(name: &str, opts: &RunOptions) -> Result<ScenarioReport> {
    let s = scenario(name, opts)?;
    runners::run_scenario(&s, opts)
}

/// Canonical text of the catalog: names, parameters, closed forms and
/// expected entries.
pub fn catalog_fingerprint() -> Result<String> {
    let mut out = String::new();
    for s in catalog()? {
        let _ = writeln!(out, "scenario {}", s.name);
        for (p, v) in &s.parameters {
            let _ = writeln!(out, "  param {p} = {v}");
        }
        for c in &s.closed_forms {
            let _ = writeln!(out, "  closed-form {c:?}");
        }
        for e in &s.expected {
            let _ = writeln!(out, "  expect {} [{}]: {}", e.check, e.provenance.name(), e.expected);
        }
    }
    Ok(out)
}

/// 64-bit FNV-1a hash of [`catalog_fingerprint`].
pub fn catalog_checksum() -> Result<u64> {
    Ok(catalog_fingerprint()?
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)))
}
