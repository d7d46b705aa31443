use serde::Serialize;

use super::ConditionalModel;
use crate::numerics::try_differentiate_in;
use crate::prelude::*;
use crate::{Error, Result};

pub const HOMOGENEITY_TOL: f64 = 1e-6;

/// Which conditional quantity is compared across `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HomogeneityKind {
    /// `E(Y|x,w)`.
    Mean,
    /// `f(y|x,w)`.
    Density,
    /// `∂/∂y log f(y|x,w)`.
    LogDensitySlopeY,
    /// `∂/∂x log f(y|x,w)`.
    LogDensitySlopeX,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub kind: HomogeneityKind,
    /// Largest `|q(w) - q(w_ref)| / max(1, |q(w_ref)|)` over the grid.
    pub deviation: f64,
    pub tolerance: f64,
    pub homogeneous: bool,
    pub reference_w: f64,
    /// `(x, y, w)` where the deviation is attained; `y` is NaN for means.
    pub worst: Option<(f64, f64, f64)>,
    pub compared: usize,
}

impl ConditionalModel {
    /// Compares a conditional quantity at every `w` of `ws` with its value
    /// at `ws[0]`, over the `x` (and, for density kinds, `y`) grid.
    pub fn homogeneity_probe(
        &self,
        xs: &[f64],
        ys: &[f64],
        ws: &[f64],
        kind: HomogeneityKind,
    ) -> Result<HomogeneityReport> {
        if xs.is_empty() || ws.len() < 2 {
            return Err(Error::params("homogeneity probe needs x points and two or more w points"));
        }
        let needs_y = kind != HomogeneityKind::Mean;
        if needs_y {
            if self.response.density.is_none() {
                return Err(Error::missing("conditional density"));
            }
            if ys.is_empty() {
                return Err(Error::params("density probes need y points"));
            }
        }
        let y_list: Vec<f64> = if needs_y { ys.to_vec() } else { vec![f64::NAN] };
        let w_ref = ws[0];
        let mut deviation = 0.0f64;
        let mut worst = None;
        let mut compared = 0;
        for &x in xs {
            for &y in &y_list {
                let Some(reference) = self.probe_quantity(kind, x, y, w_ref)? else {
                    continue;
                };
                for &w in &ws[1..] {
                    let Some(q) = self.probe_quantity(kind, x, y, w)? else {
                        continue;
                    };
                    compared += 1;
                    let d = (q - reference).abs() / reference.abs().max(1.0);
                    if d > deviation || worst.is_none() {
                        deviation = deviation.max(d);
                        worst = Some((x, y, w));
                    }
                }
            }
        }
        Ok(HomogeneityReport {
            kind,
            deviation,
            tolerance: HOMOGENEITY_TOL,
            homogeneous: deviation <= HOMOGENEITY_TOL,
            reference_w: w_ref,
            worst,
            compared,
        })
    }

    /// The probed quantity, or `None` where `y` lies outside the conditional
    /// support (log-density slopes are undefined there).
    fn probe_quantity(&self, kind: HomogeneityKind, x: f64, y: f64, w: f64) -> Result<Option<f64>> {
        let diff = &self.settings.diff;
        match kind {
            HomogeneityKind::Mean => Ok(Some(self.conditional_mean(x, w)?.value)),
            HomogeneityKind::Density => Ok(Some(self.conditional_density(y, x, w)?)),
            HomogeneityKind::LogDensitySlopeY => {
                let sup = self.response.support.effective(x, w)?;
                if !sup.contains(y) {
                    return Ok(None);
                }
                let d = try_differentiate_in(|t| self.log_density(t, x, w), y, sup, diff)?;
                Ok(Some(d.value))
            }
            HomogeneityKind::LogDensitySlopeX => {
                if !self.response.support.effective(x, w)?.contains(y) {
                    return Ok(None);
                }
                let d = try_differentiate_in(|t| self.log_density(y, t, w), x, self.x_domain, diff)?;
                Ok(Some(d.value))
            }
        }
    }

    pub(crate) fn log_density(&self, y: f64, x: f64, w: f64) -> Result<f64> {
        let v = self.conditional_density(y, x, w)?;
        if !(v > 0.0) {
            return Err(Error::NonPositiveDensity { x, y, value: v });
        }
        Ok(v.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Family, FamilyTag};
    use crate::model::{CovariateLaw, ResponseLaw};
    use crate::numerics::Interval;

    #[test]
    fn symmetric_uniform_has_homogeneous_mean() {
        let m = ConditionalModel::builder("sym")
            .covariate(CovariateLaw::family(|_| Family::gamma(1.0, 2.0)))
            .response(ResponseLaw::from_family(FamilyTag::Uniform, |x, w| {
                Family::new(FamilyTag::Uniform, &[x - w, x + w])
            }))
            .build()
            .unwrap();
        let r = m
            .homogeneity_probe(&[0.5, 1.0, 2.0], &[], &[0.5, 1.0, 3.0], HomogeneityKind::Mean)
            .unwrap();
        assert!(r.homogeneous);
        assert_eq!(r.deviation, 0.0);
        let d = m
            .homogeneity_probe(&[1.0], &[1.2], &[0.5, 1.0, 3.0], HomogeneityKind::Density)
            .unwrap();
        assert!(!d.homogeneous);
    }

    #[test]
    fn quadratic_mean_varies_in_w() {
        let m = ConditionalModel::builder("quad")
            .covariate(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .response(ResponseLaw::from_mean(|x, w| Ok(0.5 * (x * x + (w - x) * (w - x)))))
            .x_domain(Interval::positive())
            .build()
            .unwrap();
        let r = m
            .homogeneity_probe(&[1.0], &[], &[0.0, 1.0, 2.0], HomogeneityKind::Mean)
            .unwrap();
        assert!(!r.homogeneous && r.deviation > 0.1);
    }
}
