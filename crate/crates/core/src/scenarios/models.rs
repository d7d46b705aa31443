//! Model constructors for the catalog.

use crate::distributions::special::{norm_cdf, norm_pdf};
use crate::distributions::{Family, FamilyTag};
use crate::model::{
    Bound, ConditionalModel, CovariateLaw, JointDensitySpec, ResponseLaw, SupportRule, YKind,
};
use crate::multivariate::BivariateCovariateModel;
use crate::numerics::Interval;
use crate::regression::{Coefficients, RegressionFamily, RegressionSpec};
use crate::Result;

/// `Y | x, w ~ U(0, x² + (w - x)²)`, `W | x ~ N(x, 1)`.
pub fn uniform_normal() -> Result<ConditionalModel> {
    ConditionalModel::builder("uniform_normal")
        .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
        .response(ResponseLaw::from_family(FamilyTag::Uniform, |x, w| {
            Family::new(FamilyTag::Uniform, &[0.0, x * x + (w - x) * (w - x)])
        }))
        .x_domain(Interval::positive())
        .build()
}

/// `Y | x, w ~ U(x - w, x + w)` with `W ~ G(rate 1, shape 2)` free of `x`.
pub fn homogeneous_uniform() -> Result<ConditionalModel> {
    ConditionalModel::builder("homogeneous_uniform")
        .covariate(CovariateLaw::family(|_| Family::gamma(1.0, 2.0)))
        .response(ResponseLaw::from_family(FamilyTag::Uniform, |x, w| {
            Family::new(FamilyTag::Uniform, &[x - w, x + w])
        }))
        .build()
}

/// `W | x ~ G(rate x, shape 1)`, `Y | x, w ~ G(rate w, shape wx)`.
pub fn homogeneous_gamma() -> Result<ConditionalModel> {
    ConditionalModel::builder("homogeneous_gamma")
        .covariate(CovariateLaw::family(|x| Family::gamma(x, 1.0)))
        .response(ResponseLaw::from_family(FamilyTag::Gamma, |x, w| Family::gamma(w, w * x)))
        .x_domain(Interval::positive())
        .build()
}

/// Upper end of the support of `x y^(x-1) (x² + (w - x)²)`.
pub fn power_support_end(x: f64, w: f64) -> f64 {
    (x * x + (w - x) * (w - x)).powf(-1.0 / x)
}

/// Mass of `N(x, 1)` outside the `w`-window where `y` lies in the support:
/// `2Φ(-T)` with `T = √(y^(-x) - x²)`.
pub fn power_truncation_tail(y: f64, x: f64) -> f64 {
    let t2 = y.powf(-x) - x * x;
    if t2 <= 0.0 {
        1.0
    } else {
        2.0 * norm_cdf(-t2.sqrt())
    }
}

/// `f(y | x, w) = x y^(x-1) (x² + (w - x)²)` with `W | x` the tempered
/// normal `φ(w - x + λ)`.
/// `truncate` restricts each conditional density to its own support.
pub fn power_density(lambda: f64, truncate: bool) -> Result<ConditionalModel> {
    let support = if truncate {
        SupportRule::parametric(
            Bound::Fixed(0.0),
            Bound::Param(alloc::sync::Arc::new(|x, w| Ok(power_support_end(x, w)))),
            Interval::positive(),
        )
    } else {
        SupportRule::fixed(Interval::positive()).with_truncation(false)
    };
    let name = if lambda == 0.0 { "power_density" } else { "power_density_tempered" };
    ConditionalModel::builder(name)
        .covariate(CovariateLaw::family(move |x| {
            if lambda == 0.0 {
                Family::normal(x, 1.0)
            } else {
                Ok(Family::TemperedNormal { center: x, lambda })
            }
        }))
        .response(ResponseLaw::from_density(
            |y, x, w| Ok(x * y.powf(x - 1.0) * (x * x + (w - x) * (w - x))),
            support,
        ))
        .x_domain(Interval::positive())
        .build()
}

/// `Y | x, w ~ Poisson(e^{α+βx} w)` with the given covariate law.
fn poisson_frailty(name: &str, alpha: f64, beta: f64, covariate: CovariateLaw, x_domain: Interval) -> Result<ConditionalModel> {
    ConditionalModel::builder(name)
        .covariate(covariate)
        .response(ResponseLaw::from_family(FamilyTag::Poisson, move |x, w| {
            Family::new(FamilyTag::Poisson, &[(alpha + beta * x).exp() * w])
        }))
        .y_kind(YKind::Count)
        .x_domain(x_domain)
        .build()
}

/// `W | x ~ G(rate x, shape x)`.
pub fn poisson_gamma(alpha: f64, beta: f64) -> Result<ConditionalModel> {
    poisson_frailty(
        "poisson_gamma",
        alpha,
        beta,
        CovariateLaw::family(|x| Family::gamma(x, x)),
        Interval::positive(),
    )
}

/// `W ~ G(rate θ, shape θ)` free of `x`.
pub fn nb_regression(alpha: f64, beta: f64, theta: f64) -> Result<ConditionalModel> {
    poisson_frailty(
        "nb_regression",
        alpha,
        beta,
        CovariateLaw::family(move |_| Family::gamma(theta, theta)),
        Interval::real_line(),
    )
}

/// `E(Y | x, w) = x w`, `W | x ~ N(x, 1)`.
pub fn product_mean() -> Result<ConditionalModel> {
    ConditionalModel::builder("product_mean")
        .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
        .response(ResponseLaw::from_mean(|x, w| Ok(x * w)))
        .build()
}

/// Linear Gaussian confounding: `β = 1`, `γ = -1`, `W | x ~ N(2x, 1)`.
pub fn cochran_spec() -> RegressionSpec {
    RegressionSpec::new(
        RegressionFamily::Linear,
        Coefficients::Common { alpha: 0.0, beta: 1.0, gamma: -1.0 },
        CovariateLaw::family(|x| Family::normal(2.0 * x, 1.0)),
    )
}

/// The population model `E(Y | x, w)` of a common-coefficient linear spec.
pub fn linear_population(spec: &RegressionSpec) -> Result<ConditionalModel> {
    let (alpha, beta, gamma) = match spec.coefficients {
        Coefficients::Common { alpha, beta, gamma } if spec.family == RegressionFamily::Linear => {
            (alpha, beta, gamma)
        }
        _ => {
            return Err(crate::Error::params(
                "a population model needs a linear spec with common coefficients",
            ))
        }
    };
    ConditionalModel::builder("cochran_reversal")
        .covariate(spec.covariate.clone())
        .response(ResponseLaw::from_mean(move |x, w| Ok(alpha + beta * x + gamma * w)))
        .build()
}

/// Half-width of the box carrying the Gaussian chain.
pub const CHAIN_BOX: f64 = 7.0;

/// Joint density `φ(y) φ(x - y) φ(w - y)` on a cube.
pub fn xwy_chain() -> JointDensitySpec {
    let b = Interval::new(-CHAIN_BOX, CHAIN_BOX).expect("nonempty box");
    JointDensitySpec::new(
        "xwy_chain",
        |x, y, w| Ok(norm_pdf(y) * norm_pdf(x - y) * norm_pdf(w - y)),
        b,
        b,
        b,
    )
}

/// `Y | x, w1, w2 ~ N(x + w2, 1)`, `W1 | x ~ N(x, 1)`; `W2 ~ N(0, 1)`, or
/// `W2 | x ~ N(x, 1)` when `broken`.
pub fn bivariate_w(broken: bool) -> Result<BivariateCovariateModel> {
    let name = if broken { "bivariate_w_broken" } else { "bivariate_w" };
    BivariateCovariateModel::builder(name)
        .w1(CovariateLaw::family(|x| Family::normal(x, 1.0)))
        .w2(CovariateLaw::family(move |x| Family::normal(if broken { x } else { 0.0 }, 1.0)))
        .mean(|x, _, w2| Ok(x + w2))
        .density(|y, x, _, w2| Ok(norm_pdf(y - x - w2)), Interval::real_line())
        .build()
}
