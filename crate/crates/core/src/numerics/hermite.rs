//! Gauss-Hermite expectations under a normal law.

use super::{EstimatedReal, QuadratureSpec};
use crate::prelude::*;
use crate::{Error, Result};

const PI_M4: f64 = 0.751_125_544_464_942_5;
const MAX_NEWTON: usize = 100;

/// Nodes and weights of the `n`-point rule for the weight `exp(-t^2)`,
/// nodes in decreasing order.
pub fn gauss_hermite_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 {
        return Err(Error::params("Gauss-Hermite rule needs at least one node"));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() {
            return Err(Error::NonConvergence {
                subdivisions: MAX_NEWTON,
                value: z,
                err_estimate: f64::NAN,
            });
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

fn apply<G>(g: &mut G, mean: f64, sd: f64, n: usize, evals: &mut usize) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let (nodes, weights) = gauss_hermite_rule(n)?;
    let scale = core::f64::consts::SQRT_2 * sd;
    let norm = 1.0 / core::f64::consts::PI.sqrt();
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for (t, w) in nodes.iter().zip(&weights) {
        let at = mean + scale * t;
        let v = g(at)?;
        *evals += 1;
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { at });
        }
        sum += w * v;
        abs_sum += w * v.abs();
    }
    Ok((sum * norm, abs_sum * norm))
}

/// `E[g(Z)]` for `Z ~ N(mean, sd^2)`.
///
/// The error estimate is the disagreement with a rule of half the size,
/// floored at a small multiple of the rounding level.
pub fn gauss_hermite_expectation<G>(
    g: G,
    mean: f64,
    sd: f64,
    spec: &QuadratureSpec,
) -> Result<EstimatedReal>
where
    G: Fn(f64) -> f64,
{
    try_gauss_hermite_expectation(|t| Ok(g(t)), mean, sd, spec)
}

pub fn try_gauss_hermite_expectation<G>(
    mut g: G,
    mean: f64,
    sd: f64,
    spec: &QuadratureSpec,
) -> Result<EstimatedReal>
where
    G: FnMut(f64) -> Result<f64>,
{
    spec.validate()?;
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::params(format!(
            "normal law needs finite mean and positive sd, got ({mean}, {sd})"
        )));
    }
    let n = spec.hermite_nodes;
    let mut evals = 0;
    let (fine, abs_sum) = apply(&mut g, mean, sd, n, &mut evals)?;
    let (coarse, _) = apply(&mut g, mean, sd, (n / 2).max(1), &mut evals)?;
    let err = (fine - coarse).abs() + 50.0 * f64::EPSILON * abs_sum;
    Ok(EstimatedReal::new(fine, err, evals))
}
