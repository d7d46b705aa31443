use alloc::sync::Arc;

use serde::Serialize;

use super::{ConditionalModel, CovariateLaw, NumericSettings, ResponseLaw, SupportRule};
use crate::numerics::{try_integrate, Interval, QuadratureSpec};
use crate::prelude::*;
use crate::{Error, Result};

/// A joint density `f(x, y, w)`.
pub type JointDensityFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>;

/// Joint densities whose total mass deviates from one by more than this are
/// reported; they are always renormalized.
pub const JOINT_MASS_TOL: f64 = 1e-4;
/// Sup-norm tolerance of the reassembly check.
pub const REASSEMBLY_TOL: f64 = 1e-4;
/// Conditioning events with less density than this are degenerate.
pub const DEGENERATE_DENSITY: f64 = 1e-12;

/// A joint density on a bounded box, up to normalization.
#[derive(Clone)]
pub struct JointDensitySpec {
    pub name: String,
    pub density: JointDensityFn,
    pub x_range: Interval,
    pub y_range: Interval,
    pub w_range: Interval,
    /// Points per axis of the reassembly grid.
    pub probe_points: usize,
    pub settings: NumericSettings,
}

impl core::fmt::Debug for JointDensitySpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("JointDensitySpec")
            .field("name", &self.name)
            .field("x_range", &self.x_range)
            .field("y_range", &self.y_range)
            .field("w_range", &self.w_range)
            .finish()
    }
}

impl JointDensitySpec {
    pub fn new<F>(name: impl Into<String>, density: F, x: Interval, y: Interval, w: Interval) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            density: Arc::new(density),
            x_range: x,
            y_range: y,
            w_range: w,
            probe_points: 9,
            settings: NumericSettings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointDiagnostics {
    /// Mass of the supplied density over the box before renormalization.
    pub total_mass: f64,
    /// True when `total_mass` is further than [`JOINT_MASS_TOL`] from one.
    pub mass_flagged: bool,
    /// Largest `|f(y|x,w) f(w|x) f(x) - f(x,y,w)|` over the probe grid.
    pub reassembly_deviation: f64,
    pub probe_points: usize,
}

fn grid(interval: Interval, n: usize) -> Vec<f64> {
    let (lo, hi) = (interval.lower(), interval.upper());
    (0..n)
        .map(|i| lo + (i as f64 + 0.5) / n as f64 * (hi - lo))
        .collect()
}

/// Builds the conditional model `f(w|x)`, `f(y|x,w)` of a joint density by
/// one-dimensional normalizations, and checks that the pieces reassemble
/// the joint on a probe grid.
pub fn condition_from_joint(spec: &JointDensitySpec) -> Result<(ConditionalModel, JointDiagnostics)> {
    for r in [spec.x_range, spec.y_range, spec.w_range] {
        if !r.is_bounded() {
            return Err(Error::params("joint densities are declared on a bounded box"));
        }
    }
    if spec.probe_points == 0 {
        return Err(Error::params("the reassembly grid needs at least one point per axis"));
    }
    let quad: QuadratureSpec = spec.settings.quadrature;
    let raw = spec.density.clone();
    let (yr, wr, xr) = (spec.y_range, spec.w_range, spec.x_range);

    let total = try_integrate(
        |x| {
            Ok(try_integrate(
                |w| Ok(try_integrate(|y| raw(x, y, w), yr, &quad)?.value),
                wr,
                &quad,
            )?
            .value)
        },
        xr,
        &quad,
    )?;
    if !(total.value > 0.0) || !total.value.is_finite() {
        return Err(Error::params(format!(
            "joint density `{}` has total mass {}",
            spec.name, total.value
        )));
    }
    let z = total.value;
    let joint: JointDensityFn = Arc::new(move |x, y, w| {
        let v = raw(x, y, w)?;
        if v < 0.0 || !v.is_finite() {
            return Err(Error::params(format!("joint density is {v} at ({x}, {y}, {w})")));
        }
        Ok(v / z)
    });

    let m = {
        let joint = joint.clone();
        move |x: f64, w: f64| -> Result<f64> { Ok(try_integrate(|y| joint(x, y, w), yr, &quad)?.value) }
    };
    let m: Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync> = Arc::new(m);

    let kernel = m.clone();
    let covariate = CovariateLaw::kernel(move |x, w| kernel(x, w), wr);
    let response_joint = joint.clone();
    let response_m = m.clone();
    let response = ResponseLaw::from_density(
        move |y, x, w| {
            let mw = response_m(x, w)?;
            if !(mw >= f64::MIN_POSITIVE) {
                return Err(Error::DegenerateConditional { at: w });
            }
            Ok(response_joint(x, y, w)? / mw)
        },
        SupportRule::fixed(yr),
    );
    let probes = grid(xr, 3);
    let model = ConditionalModel::builder(spec.name.clone())
        .covariate(covariate)
        .response(response)
        .x_domain(xr)
        .settings(spec.settings)
        .probe_xs(&probes)
        .build()?;

    let n = spec.probe_points;
    let (gx, gy, gw) = (grid(xr, n), grid(yr, n), grid(wr, n));
    let mut deviation = 0f64;
    for &x in &gx {
        let hx = try_integrate(|w| m(x, w), wr, &quad)?.value;
        if hx < DEGENERATE_DENSITY {
            return Err(Error::DegenerateConditional { at: x });
        }
        for &w in &gw {
            let fw = model.covariate_density(w, x)?;
            for &y in &gy {
                let rebuilt = model.conditional_density(y, x, w)? * fw * hx;
                deviation = deviation.max((rebuilt - joint(x, y, w)?).abs());
            }
        }
    }
    if deviation > REASSEMBLY_TOL {
        return Err(Error::params(format!(
            "conditionals of `{}` do not reassemble the joint (deviation {deviation:e})",
            spec.name
        )));
    }
    Ok((
        model,
        JointDiagnostics {
            total_mass: z,
            mass_flagged: (z - 1.0).abs() > JOINT_MASS_TOL,
            reassembly_deviation: deviation,
            probe_points: n * n * n,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::special::{norm_cdf, norm_pdf};

    fn box_() -> Interval {
        Interval::new(-6.0, 6.0).unwrap()
    }

    #[test]
    fn fully_independent_joint_factorizes() {
        let spec = JointDensitySpec {
            probe_points: 3,
            ..JointDensitySpec::new(
                "independent",
                |x, y, w| Ok(norm_pdf(x) * norm_pdf(y - 1.0) * norm_pdf(w + 0.5)),
                box_(),
                box_(),
                box_(),
            )
        };
        let (m, diag) = condition_from_joint(&spec).unwrap();
        assert!((diag.total_mass - 1.0).abs() < 1e-6);
        assert!(!diag.mass_flagged);
        assert!(diag.reassembly_deviation < 1e-10);
        let mass = |lo: f64, hi: f64| norm_cdf(hi) - norm_cdf(lo);
        let (y_mass, w_mass) = (mass(-7.0, 5.0), mass(-5.5, 6.5));
        for (x, y, w) in [(0.3, 0.5, -0.2), (-1.0, 2.0, 1.0)] {
            let fy = m.conditional_density(y, x, w).unwrap();
            assert!((fy - norm_pdf(y - 1.0) / y_mass).abs() < 1e-8);
            let fw = m.covariate_density(w, x).unwrap();
            assert!((fw - norm_pdf(w + 0.5) / w_mass).abs() < 1e-8);
        }
    }

    #[test]
    fn unbounded_box_rejected() {
        let spec = JointDensitySpec::new(
            "open",
            |_, _, _| Ok(1.0),
            Interval::real_line(),
            box_(),
            box_(),
        );
        assert!(condition_from_joint(&spec).is_err());
    }
}
