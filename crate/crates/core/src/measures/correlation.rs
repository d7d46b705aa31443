use serde::Serialize;

use crate::distributions::{Family, Seed};
use crate::model::ConditionalModel;
use crate::prelude::*;
use crate::{Error, Result};

/// Monte Carlo estimate of the correlation of `Y` and `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub rho: f64,
    /// Large-sample standard error `(1 - ρ²) / √(n - 1)`.
    pub std_error: f64,
    /// `rho ± 3 std_error`, clipped to `[-1, 1]`.
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl CorrelationEstimate {
    pub fn band_contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Draws `(x, w, y)` with `x ~ x_law` and estimates `ρ(Y, X)`.
pub fn correlation_mc(
    model: &ConditionalModel,
    x_law: &Family,
    n: usize,
    seed: Seed,
) -> Result<CorrelationEstimate> {
    x_law.validate()?;
    if n < 3 {
        return Err(Error::params("correlation needs at least three draws"));
    }
    if !model.capabilities().sampler {
        return Err(Error::missing(format!("response sampler of `{}`", model.name)));
    }
    let mut rng = seed.rng();
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = x_law.draw(&mut rng);
        if !model.x_domain.contains(x) {
            return Err(Error::params(format!(
                "x law draws {x}, outside the x domain of `{}`",
                model.name
            )));
        }
        let (_, y) = model.draw(x, &mut rng)?;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let nf = n as f64;
    let cxx = sxx - sx * sx / nf;
    let cyy = syy - sy * sy / nf;
    let cxy = sxy - sx * sy / nf;
    if !(cxx > 0.0 && cyy > 0.0) {
        return Err(Error::params("correlation undefined for a constant sample"));
    }
    let rho = (cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0);
    let std_error = (1.0 - rho * rho) / (nf - 1.0).sqrt();
    Ok(CorrelationEstimate {
        rho,
        std_error,
        lower: (rho - 3.0 * std_error).max(-1.0),
        upper: (rho + 3.0 * std_error).min(1.0),
        n,
    })
}
