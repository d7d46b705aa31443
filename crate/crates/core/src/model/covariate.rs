use alloc::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::distributions::Family;
use crate::numerics::{
    try_differentiate_in, try_gauss_hermite_expectation, try_integrate_with, DiffSpec,
    EstimatedReal, Hint, Interval, QuadMethod, QuadratureSpec,
};
use crate::prelude::*;
use crate::{Error, Result};

/// Parameterized law of `W` at a given `x`.
pub type FamilyFn = Arc<dyn Fn(f64) -> Result<Family> + Send + Sync>;
/// A function of `x` alone.
pub type XFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;
/// A function of `(w, x)`, used for covariate densities and kernels.
pub type WxFn = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;

/// Covariate densities below this value are treated as zero mass when
/// integrating, so integrands are never evaluated deep in the tails.
pub const WEIGHT_FLOOR: f64 = 1e-14;

/// The conditional law `f(w|x)` of the covariate.
#[derive(Clone)]
pub enum CovariateLaw {
    /// A parametric family whose parameters depend on `x`.
    Family(FamilyFn),
    /// A normalized density `f(w|x)` on a fixed support.
    Density { pdf: WxFn, support: Interval },
    /// A nonnegative kernel `m(x, w)`; the law is `m / ∫ m dw`.
    Kernel { kernel: WxFn, support: Interval },
    /// `W = v(x)` with probability one.
    PointMass(XFn),
    /// Finitely many atoms with `x`-dependent probabilities.
    Discrete { levels: Vec<f64>, probs: Vec<XFn> },
}

impl core::fmt::Debug for CovariateLaw {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let kind = match self {
            CovariateLaw::Family(_) => "Family",
            CovariateLaw::Density { .. } => "Density",
            CovariateLaw::Kernel { .. } => "Kernel",
            CovariateLaw::PointMass(_) => "PointMass",
            CovariateLaw::Discrete { .. } => "Discrete",
        };
        write!(f, "CovariateLaw::{kind}")
    }
}

impl CovariateLaw {
    pub fn family<F>(f: F) -> Self
    where
        F: Fn(f64) -> Result<Family> + Send + Sync + 'static,
    {
        CovariateLaw::Family(Arc::new(f))
    }

    pub fn pdf<F>(pdf: F, support: Interval) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        CovariateLaw::Density {
            pdf: Arc::new(pdf),
            support,
        }
    }

    pub fn kernel<F>(kernel: F, support: Interval) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        CovariateLaw::Kernel {
            kernel: Arc::new(kernel),
            support,
        }
    }

    pub fn point_mass<F>(value: F) -> Self
    where
        F: Fn(f64) -> Result<f64> + Send + Sync + 'static,
    {
        CovariateLaw::PointMass(Arc::new(value))
    }

    pub fn discrete(levels: Vec<f64>, probs: Vec<XFn>) -> Result<Self> {
        if levels.is_empty() || levels.len() != probs.len() {
            return Err(Error::params("discrete law needs one probability per level"));
        }
        Ok(CovariateLaw::Discrete { levels, probs })
    }

    /// The family at `x`, for [`CovariateLaw::Family`] laws.
    pub fn family_at(&self, x: f64) -> Option<Result<Family>> {
        match self {
            CovariateLaw::Family(f) => Some(f(x).and_then(|fam| fam.validate().map(|_| fam))),
            _ => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, CovariateLaw::PointMass(_))
    }

    /// Support of `W` given `x`; atoms are reported through a small interval
    /// around them.
    pub fn support(&self, x: f64) -> Result<Interval> {
        match self {
            CovariateLaw::Family(f) => Ok(f(x)?.support()),
            CovariateLaw::Density { support, .. } | CovariateLaw::Kernel { support, .. } => {
                Ok(*support)
            }
            CovariateLaw::PointMass(v) => {
                let v = v(x)?;
                Interval::new(v - 0.5, v + 0.5)
            }
            CovariateLaw::Discrete { levels, .. } => {
                let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo - 0.5, hi + 0.5)
            }
        }
    }

    /// True when the support does not move with `x`.
    pub fn has_fixed_support(&self, probe_xs: &[f64]) -> bool {
        match self {
            CovariateLaw::Density { .. } | CovariateLaw::Kernel { .. } => true,
            CovariateLaw::Discrete { .. } => true,
            CovariateLaw::PointMass(_) => false,
            CovariateLaw::Family(_) => {
                let supports: Vec<_> = probe_xs.iter().filter_map(|x| self.support(*x).ok()).collect();
                supports.windows(2).all(|p| p[0] == p[1])
            }
        }
    }

    /// A few representative values of `W` at `x`: mean and mean ± sd for
    /// families, interior points for densities, the atoms otherwise.
    pub fn probe_points(&self, x: f64) -> Result<Vec<f64>> {
        Ok(match self {
            CovariateLaw::Family(f) => {
                let fam = f(x)?;
                let (m, s) = (fam.mean(), fam.variance().sqrt());
                let sup = fam.support();
                [m - s, m, m + s]
                    .into_iter()
                    .map(|w| {
                        if fam.is_discrete() {
                            w.round().max(0.0)
                        } else if sup.contains(w) {
                            w
                        } else {
                            m
                        }
                    })
                    .collect()
            }
            CovariateLaw::Density { support, .. } | CovariateLaw::Kernel { support, .. } => {
                interior_points(*support)
            }
            CovariateLaw::PointMass(v) => vec![v(x)?],
            CovariateLaw::Discrete { levels, .. } => levels.clone(),
        })
    }

    fn kernel_mass(kernel: &WxFn, support: Interval, x: f64, spec: &QuadratureSpec) -> Result<EstimatedReal> {
        let mass = try_integrate_with(|w| kernel(x, w), support, &Hint::default(), spec)?;
        if !(mass.value > 1e-12) {
            return Err(Error::DegenerateConditional { at: x });
        }
        Ok(mass)
    }

    /// Density (or atom mass) of `W` at `w` given `x`.
    pub fn density(&self, w: f64, x: f64, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            CovariateLaw::Family(f) => Ok(f(x)?.pdf(w)),
            CovariateLaw::Density { pdf, support } => {
                if support.contains(w) {
                    pdf(w, x)
                } else {
                    Ok(0.0)
                }
            }
            CovariateLaw::Kernel { kernel, support } => {
                if !support.contains(w) {
                    return Ok(0.0);
                }
                let mass = Self::kernel_mass(kernel, *support, x, spec)?;
                Ok(kernel(x, w)? / mass.value)
            }
            CovariateLaw::PointMass(v) => Ok(if v(x)? == w { 1.0 } else { 0.0 }),
            CovariateLaw::Discrete { levels, probs } => {
                let mut total = 0.0;
                for (l, p) in levels.iter().zip(probs) {
                    if *l == w {
                        total += p(x)?;
                    }
                }
                Ok(total)
            }
        }
    }

    /// `∂f(w|x)/∂x`, differentiating the density in `x` over `x_domain`.
    pub fn density_dx(
        &self,
        w: f64,
        x: f64,
        x_domain: Interval,
        quad: &QuadratureSpec,
        diff: &DiffSpec,
    ) -> Result<EstimatedReal> {
        try_differentiate_in(|t| self.density(w, t, quad), x, x_domain, diff)
    }

    /// `E[g(W) | x]`. The inner error estimates reported by `g` are bounded by
    /// their maximum, since the weights integrate to one.
    pub fn expect<G>(&self, x: f64, mut g: G, spec: &QuadratureSpec) -> Result<EstimatedReal>
    where
        G: FnMut(f64) -> Result<EstimatedReal>,
    {
        let mut inner_err = 0f64;
        let mut inner_evals = 0usize;
        let mut call = |w: f64| -> Result<f64> {
            let r = g(w)?;
            inner_err = inner_err.max(r.err_estimate);
            inner_evals += r.evaluations;
            Ok(r.value)
        };
        let outer = match self {
            CovariateLaw::Family(f) => {
                let fam = f(x)?;
                fam.validate()?;
                if fam.is_discrete() {
                    discrete_family_sum(&fam, &mut call)?
                } else if let (QuadMethod::GaussHermite, Some((m, s))) =
                    (spec.method, fam.normal_form())
                {
                    try_gauss_hermite_expectation(&mut call, m, s, spec)?
                } else {
                    let hint = Hint::centered(fam.mean(), fam.variance().sqrt());
                    try_integrate_with(
                        |w| {
                            let p = fam.pdf(w);
                            if p < WEIGHT_FLOOR {
                                Ok(0.0)
                            } else {
                                Ok(call(w)? * p)
                            }
                        },
                        fam.support(),
                        &hint,
                        spec,
                    )?
                }
            }
            CovariateLaw::Density { pdf, support } => try_integrate_with(
                |w| {
                    let p = pdf(w, x)?;
                    if p < WEIGHT_FLOOR {
                        Ok(0.0)
                    } else {
                        Ok(call(w)? * p)
                    }
                },
                *support,
                &Hint::default(),
                spec,
            )?,
            CovariateLaw::Kernel { kernel, support } => {
                let mass = Self::kernel_mass(kernel, *support, x, spec)?;
                let r = try_integrate_with(
                    |w| {
                        let p = kernel(x, w)? / mass.value;
                        if p < WEIGHT_FLOOR {
                            Ok(0.0)
                        } else {
                            Ok(call(w)? * p)
                        }
                    },
                    *support,
                    &Hint::default(),
                    spec,
                )?;
                EstimatedReal::new(
                    r.value,
                    r.err_estimate + r.value.abs() * mass.err_estimate / mass.value,
                    r.evaluations + mass.evaluations,
                )
            }
            CovariateLaw::PointMass(v) => {
                let w = v(x)?;
                EstimatedReal::exact(call(w)?)
            }
            CovariateLaw::Discrete { levels, probs } => {
                let mut sum = 0.0;
                let mut abs = 0.0;
                for (l, p) in levels.iter().zip(probs) {
                    let p = p(x)?;
                    if p > 0.0 {
                        let v = call(*l)?;
                        sum += p * v;
                        abs += (p * v).abs();
                    }
                }
                EstimatedReal::new(sum, f64::EPSILON * abs * levels.len() as f64, levels.len())
            }
        };
        Ok(EstimatedReal::new(
            outer.value,
            outer.err_estimate + inner_err,
            outer.evaluations + inner_evals,
        ))
    }

    /// `∫ g(w) ∂f(w|x)/∂x dw`, differentiating the covariate law in `x` inside
    /// the integral. Point masses have no density to differentiate.
    pub fn expect_dx<G>(
        &self,
        x: f64,
        x_domain: Interval,
        mut g: G,
        quad: &QuadratureSpec,
        diff: &DiffSpec,
    ) -> Result<EstimatedReal>
    where
        G: FnMut(f64) -> Result<f64>,
    {
        let mut diff_err = 0f64;
        let mut weighted = |gw: f64, d: EstimatedReal| -> f64 {
            diff_err = diff_err.max((gw * d.err_estimate).abs());
            gw * d.value
        };
        let outer = match self {
            CovariateLaw::Family(f) => {
                let fam = f(x)?;
                fam.validate()?;
                let dens_dx = |w: f64| try_differentiate_in(|t| Ok(f(t)?.pdf(w)), x, x_domain, diff);
                if fam.is_discrete() {
                    let mut sum = 0.0;
                    let mut mass = 0.0;
                    let mut k = 0u64;
                    while mass < 1.0 - 1e-14 && k < 10_000_000 {
                        let w = k as f64;
                        let p = fam.pdf(w);
                        mass += p;
                        if p >= WEIGHT_FLOOR {
                            let d = dens_dx(w)?;
                            sum += weighted(g(w)?, d);
                        }
                        k += 1;
                        if matches!(fam, Family::Bernoulli { .. }) && k > 1 {
                            break;
                        }
                    }
                    EstimatedReal::new(sum, (1.0 - mass).abs(), k as usize)
                } else {
                    let hint = Hint::centered(fam.mean(), fam.variance().sqrt());
                    try_integrate_with(
                        |w| {
                            if fam.pdf(w) < WEIGHT_FLOOR {
                                return Ok(0.0);
                            }
                            let d = dens_dx(w)?;
                            Ok(weighted(g(w)?, d))
                        },
                        fam.support(),
                        &hint,
                        quad,
                    )?
                }
            }
            CovariateLaw::Density { pdf, support } => try_integrate_with(
                |w| {
                    if pdf(w, x)? < WEIGHT_FLOOR {
                        return Ok(0.0);
                    }
                    let d = try_differentiate_in(|t| pdf(w, t), x, x_domain, diff)?;
                    Ok(weighted(g(w)?, d))
                },
                *support,
                &Hint::default(),
                quad,
            )?,
            CovariateLaw::Kernel { kernel, support } => {
                // quotient rule on k(x, w) / M(x)
                let mass = Self::kernel_mass(kernel, *support, x, quad)?;
                let mass_dx = try_differentiate_in(
                    |t| Ok(Self::kernel_mass(kernel, *support, t, quad)?.value),
                    x,
                    x_domain,
                    diff,
                )?;
                let m = mass.value;
                let r = try_integrate_with(
                    |w| {
                        let k = kernel(x, w)?;
                        if k / m < WEIGHT_FLOOR {
                            return Ok(0.0);
                        }
                        let dk = try_differentiate_in(|t| kernel(t, w), x, x_domain, diff)?;
                        let d = EstimatedReal::new(
                            dk.value / m - k * mass_dx.value / (m * m),
                            dk.err_estimate / m + k * mass_dx.err_estimate / (m * m),
                            dk.evaluations,
                        );
                        Ok(weighted(g(w)?, d))
                    },
                    *support,
                    &Hint::default(),
                    quad,
                )?;
                EstimatedReal::new(r.value, r.err_estimate, r.evaluations + mass.evaluations)
            }
            CovariateLaw::PointMass(_) => {
                return Err(Error::missing("x-derivative of a point-mass covariate law"));
            }
            CovariateLaw::Discrete { levels, probs } => {
                let mut sum = 0.0;
                for (l, p) in levels.iter().zip(probs) {
                    let d = try_differentiate_in(|t| p(t), x, x_domain, diff)?;
                    sum += weighted(g(*l)?, d);
                }
                EstimatedReal::new(sum, 0.0, levels.len())
            }
        };
        Ok(EstimatedReal::new(
            outer.value,
            outer.err_estimate + diff_err,
            outer.evaluations,
        ))
    }

    /// `E[g(W) | x]` for a plain function.
    pub fn expect_value<G>(&self, x: f64, mut g: G, spec: &QuadratureSpec) -> Result<EstimatedReal>
    where
        G: FnMut(f64) -> Result<f64>,
    {
        self.expect(x, |w| g(w).map(EstimatedReal::exact), spec)
    }

    /// Total mass of `f(·|x)`.
    pub fn total_mass(&self, x: f64, spec: &QuadratureSpec) -> Result<EstimatedReal> {
        match self {
            CovariateLaw::Density { pdf, support } => {
                try_integrate_with(|w| pdf(w, x), *support, &Hint::default(), spec)
            }
            CovariateLaw::Family(f) => {
                let fam = f(x)?;
                fam.validate()?;
                if fam.is_discrete() {
                    discrete_family_sum(&fam, &mut |_| Ok(1.0))
                } else {
                    let hint = Hint::centered(fam.mean(), fam.variance().sqrt());
                    try_integrate_with(|w| Ok(fam.pdf(w)), fam.support(), &hint, spec)
                }
            }
            CovariateLaw::Discrete { probs, .. } => {
                let mut s = 0.0;
                for p in probs {
                    let p = p(x)?;
                    if p < 0.0 {
                        return Err(Error::params(format!("negative level probability {p} at x={x}")));
                    }
                    s += p;
                }
                Ok(EstimatedReal::exact(s))
            }
            CovariateLaw::Kernel { .. } | CovariateLaw::PointMass(_) => Ok(EstimatedReal::exact(1.0)),
        }
    }

    /// One draw of `W` given `x`.
    pub fn draw(&self, x: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        use rand::Rng;
        match self {
            CovariateLaw::Family(f) => {
                let fam = f(x)?;
                fam.validate()?;
                Ok(fam.draw(rng))
            }
            CovariateLaw::PointMass(v) => v(x),
            CovariateLaw::Discrete { levels, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (l, p) in levels.iter().zip(probs) {
                    acc += p(x)?;
                    if u < acc {
                        return Ok(*l);
                    }
                }
                Ok(*levels.last().unwrap_or(&0.0))
            }
            CovariateLaw::Density { .. } | CovariateLaw::Kernel { .. } => {
                Err(Error::missing("sampler for a density-specified covariate law"))
            }
        }
    }
}

fn interior_points(support: Interval) -> Vec<f64> {
    let (lo, hi) = (support.lower(), support.upper());
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => vec![lo + 0.25 * (hi - lo), lo + 0.5 * (hi - lo), lo + 0.75 * (hi - lo)],
        (true, false) => vec![lo + 0.5, lo + 1.0, lo + 2.0],
        (false, true) => vec![hi - 2.0, hi - 1.0, hi - 0.5],
        (false, false) => vec![-1.0, 0.0, 1.0],
    }
}

/// Sums `g(k) P(W = k)` over the atoms of a discrete family until the
/// remaining mass is negligible.
fn discrete_family_sum<G>(fam: &Family, g: &mut G) -> Result<EstimatedReal>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut sum = 0.0;
    let mut mass = 0.0;
    let mut k = 0u64;
    let limit = 10_000_000u64;
    while mass < 1.0 - 1e-14 && k < limit {
        let p = fam.pdf(k as f64);
        if p > 0.0 {
            sum += p * g(k as f64)?;
        }
        mass += p;
        k += 1;
        if matches!(fam, Family::Bernoulli { .. }) && k > 1 {
            break;
        }
    }
    Ok(EstimatedReal::new(sum, (1.0 - mass).abs() * sum.abs().max(1.0) + f64::EPSILON * sum.abs(), k as usize))
}
