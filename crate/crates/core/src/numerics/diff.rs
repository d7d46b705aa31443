//! Finite differences with Richardson extrapolation.

use super::{DiffSpec, EstimatedReal, Interval};
use crate::prelude::*;
use crate::{Error, Result};

// Smallest admissible step relative to the nominal one.
const MIN_SHRINK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

/// Step used by second-order stencils: `base_step^(3/4) * max(1, |at|)`.
pub fn second_order_step(spec: &DiffSpec, at: f64) -> f64 {
    spec.base_step.powf(0.75) * at.abs().max(1.0)
}

/// Richardson tableau over halving steps. `order(k)` is the exponent of the
/// error term eliminated at column `k` (1-based). Returns the extrapolated
/// value and the spread between the last two diagonal entries.
fn richardson(rows: &[f64], order: impl Fn(usize) -> i32) -> (f64, f64) {
    let n = rows.len();
    let mut prev: Vec<f64> = rows.to_vec();
    let mut diag = vec![rows[0]];
    let mut last_spread = 0.0;
    for k in 1..n {
        let factor = 2f64.powi(order(k)) - 1.0;
        let mut next = Vec::with_capacity(n - k);
        for i in k..n {
            let hi = prev[i - k + 1];
            let lo = prev[i - k];
            next.push(hi + (hi - lo) / factor);
        }
        last_spread = (next[next.len() - 1] - prev[prev.len() - 1]).abs();
        diag.push(next[next.len() - 1]);
        prev = next;
    }
    let value = *diag.last().unwrap_or(&rows[0]);
    let spread = if diag.len() >= 2 {
        (diag[diag.len() - 1] - diag[diag.len() - 2]).abs().max(last_spread)
    } else {
        0.0
    };
    (value, spread)
}

/// `f'(at)` by central differences on the whole real line.
pub fn differentiate<F>(f: F, at: f64, spec: &DiffSpec) -> Result<EstimatedReal>
where
    F: Fn(f64) -> f64,
{
    differentiate_in(f, at, Interval::real_line(), spec)
}

/// `f'(at)` for `f` defined on `domain`; switches to a one-sided stencil or a
/// shrunken step when the symmetric neighbourhood leaves the domain.
pub fn differentiate_in<F>(f: F, at: f64, domain: Interval, spec: &DiffSpec) -> Result<EstimatedReal>
where
    F: Fn(f64) -> f64,
{
    try_differentiate_in(|t| Ok(f(t)), at, domain, spec)
}

pub fn try_differentiate_in<F>(
    mut f: F,
    at: f64,
    domain: Interval,
    spec: &DiffSpec,
) -> Result<EstimatedReal>
where
    F: FnMut(f64) -> Result<f64>,
{
    spec.validate()?;
    if !at.is_finite() || at < domain.lower() || at > domain.upper() {
        return Err(Error::StepUnderflow { at });
    }
    let levels = spec.richardson_levels;
    let rows_needed = levels + 1 + usize::from(levels == 0);
    // `h` is the finest step; coarser rows use `2h`, `4h`, ...
    let nominal = spec.base_step * at.abs().max(1.0) * (1u64 << (rows_needed - 1).min(52)) as f64;
    let left = at - domain.lower();
    let right = domain.upper() - at;
    let (stencil, h) = if left > nominal && right > nominal {
        (Stencil::Central, nominal)
    } else if right > 2.0 * nominal {
        (Stencil::Forward, nominal)
    } else if left > 2.0 * nominal {
        (Stencil::Backward, nominal)
    } else {
        let shrunk_central = 0.5 * left.min(right);
        let shrunk_side = 0.45 * left.max(right);
        if shrunk_central >= 0.5 * shrunk_side && shrunk_central >= MIN_SHRINK * nominal {
            (Stencil::Central, shrunk_central)
        } else if shrunk_side >= MIN_SHRINK * nominal {
            if right >= left {
                (Stencil::Forward, shrunk_side)
            } else {
                (Stencil::Backward, shrunk_side)
            }
        } else {
            return Err(Error::StepUnderflow { at });
        }
    };

    let mut evals = 0usize;
    let mut fmax = 0f64;
    let mut eval = |t: f64, evals: &mut usize, fmax: &mut f64| -> Result<f64> {
        let v = f(t)?;
        *evals += 1;
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { at: t });
        }
        *fmax = fmax.max(v.abs());
        Ok(v)
    };

    let f0 = if stencil == Stencil::Central {
        0.0
    } else {
        eval(at, &mut evals, &mut fmax)?
    };
    let mut rows = Vec::with_capacity(rows_needed);
    let mut step = h;
    for _ in 0..rows_needed {
        let d = match stencil {
            Stencil::Central => {
                let (xp, xm) = (at + step, at - step);
                let p = eval(xp, &mut evals, &mut fmax)?;
                let m = eval(xm, &mut evals, &mut fmax)?;
                (p - m) / (xp - xm)
            }
            Stencil::Forward | Stencil::Backward => {
                let s = if stencil == Stencil::Forward { step } else { -step };
                // Representable offset, so both nodes sit exactly `s` and `2s` away.
                let s = (at + s) - at;
                let f1 = eval(at + s, &mut evals, &mut fmax)?;
                let f2 = eval(at + 2.0 * s, &mut evals, &mut fmax)?;
                (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * s)
            }
        };
        rows.push(d);
        step *= 0.5;
    }
    let h_min = step * 2.0;

    let (value, spread) = if levels == 0 {
        (rows[0], (rows[0] - rows[1]).abs())
    } else {
        match stencil {
            Stencil::Central => richardson(&rows, |k| 2 * k as i32),
            _ => richardson(&rows, |k| k as i32 + 1),
        }
    };
    let roundoff = 4.0 * f64::EPSILON * fmax / h_min;
    Ok(EstimatedReal::new(value, spread + roundoff, evals))
}

/// `d^2 log f / dx dy` at `(at_x, at_y)` for `f` positive on the plane.
pub fn mixed_partial<F>(f: F, at_x: f64, at_y: f64, spec: &DiffSpec) -> Result<EstimatedReal>
where
    F: Fn(f64, f64) -> f64,
{
    try_mixed_partial_log(
        |x, y| Ok(f(x, y)),
        at_x,
        at_y,
        Interval::real_line(),
        Interval::real_line(),
        spec,
    )
}

/// Four-point stencil on `log f` with joint step halving.
///
/// Each step is `base_step^(3/4)` times `min(max(1, |at|), distance to the
/// nearest domain edge)`, so the stencil always stays inside the domains.
pub fn try_mixed_partial_log<F>(
    mut f: F,
    at_x: f64,
    at_y: f64,
    x_domain: Interval,
    y_domain: Interval,
    spec: &DiffSpec,
) -> Result<EstimatedReal>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    spec.validate()?;
    let step_for = |at: f64, dom: Interval| -> Result<f64> {
        let room = (at - dom.lower()).min(dom.upper() - at);
        if !at.is_finite() || !(room > 0.0) {
            return Err(Error::StepUnderflow { at });
        }
        let h = spec.base_step.powf(0.75) * at.abs().max(1.0).min(room);
        if !(h > 64.0 * f64::EPSILON * at.abs().max(1.0)) {
            return Err(Error::StepUnderflow { at });
        }
        Ok(h)
    };
    let hx0 = step_for(at_x, x_domain)?;
    let hy0 = step_for(at_y, y_domain)?;

    let mut evals = 0usize;
    let mut gmax = 0f64;
    let mut log_f = |x: f64, y: f64| -> Result<f64> {
        let v = f(x, y)?;
        evals += 1;
        if v.is_nan() || v.is_infinite() {
            return Err(Error::NonFiniteEvaluation { at: x });
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveDensity { x, y, value: v });
        }
        let g = v.ln();
        gmax = gmax.max(g.abs());
        Ok(g)
    };

    let levels = spec.richardson_levels;
    let rows_needed = levels + 1 + usize::from(levels == 0);
    let mut rows = Vec::with_capacity(rows_needed);
    let (mut hx, mut hy) = (hx0, hy0);
    for _ in 0..rows_needed {
        let pp = log_f(at_x + hx, at_y + hy)?;
        let pm = log_f(at_x + hx, at_y - hy)?;
        let mp = log_f(at_x - hx, at_y + hy)?;
        let mm = log_f(at_x - hx, at_y - hy)?;
        rows.push(((pp - pm) - (mp - mm)) / (4.0 * hx * hy));
        hx *= 0.5;
        hy *= 0.5;
    }
    let (hx_min, hy_min) = (2.0 * hx, 2.0 * hy);
    let (value, spread) = if levels == 0 {
        (rows[0], (rows[0] - rows[1]).abs())
    } else {
        richardson(&rows, |k| 2 * k as i32)
    };
    let roundoff = 4.0 * f64::EPSILON * gmax.max(1.0) / (hx_min * hy_min);
    Ok(EstimatedReal::new(value, spread + roundoff, evals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_one() {
        let r = differentiate(|x| x * x, 1.0, &DiffSpec::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn normal_density_flat_at_zero() {
        let r = differentiate(|x| (-0.5 * x * x).exp(), 0.0, &DiffSpec::default()).unwrap();
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn mixture_mean_slope() {
        let r = differentiate(|x| 0.5 * (x * x + 1.0), 1.5, &DiffSpec::default()).unwrap();
        assert!((r.value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn exponential_with_reported_error() {
        let r = differentiate(|x| x.exp(), 0.3, &DiffSpec::default()).unwrap();
        let exact = 0.3f64.exp();
        assert!((r.value - exact).abs() < 1e-9);
        assert!(r.err_estimate >= 0.0 && r.err_estimate < 1e-6);
    }

    #[test]
    fn one_sided_at_domain_edge() {
        let dom = Interval::positive();
        let r = differentiate_in(|x| x.sqrt() * x, 1e-9, dom, &DiffSpec::default());
        assert!(r.is_ok());
        let r = differentiate_in(|x| x.ln(), 1e-3, dom, &DiffSpec::default()).unwrap();
        assert!((r.value - 1e3).abs() / 1e3 < 1e-6, "{r:?}");
        let r = differentiate_in(|x| x * x * x, 0.0, Interval::new(0.0, 1.0).unwrap(), &DiffSpec::default())
            .unwrap();
        assert!(r.value.abs() < 1e-9);
    }

    #[test]
    fn backward_stencil_near_upper_edge() {
        let dom = Interval::new(0.0, 1.0).unwrap();
        let r = differentiate_in(|x| x * x, 1.0, dom, &DiffSpec::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn no_room_is_step_underflow() {
        let dom = Interval::new(0.0, 1e-12).unwrap();
        let err = differentiate_in(|x| x, 0.5e-12, dom, &DiffSpec::default()).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
    }

    #[test]
    fn nan_reported() {
        let err = differentiate(|x| if x > 1.0 { f64::NAN } else { x }, 1.0, &DiffSpec::default())
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { .. }));
    }

    #[test]
    fn zero_levels_still_estimates_error() {
        let spec = DiffSpec {
            richardson_levels: 0,
            ..DiffSpec::default()
        };
        let r = differentiate(|x| x.sin(), 0.4, &spec).unwrap();
        assert!((r.value - 0.4f64.cos()).abs() < 1e-9);
        assert!(r.err_estimate > 0.0);
    }

    #[test]
    fn log_bilinear_mixed_partial() {
        let r = mixed_partial(|x, y| (x * y).exp(), 0.3, -1.2, &DiffSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn product_density_has_no_interaction() {
        let r = mixed_partial(
            |x, y| (1.0 + x * x) * (-y * y).exp(),
            0.7,
            0.2,
            &DiffSpec::default(),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-6);
    }

    #[test]
    fn power_density_interaction_near_zero() {
        let w = 0.4;
        let f = |x: f64, y: f64| x * y.powf(x - 1.0) * (x * x + (w - x) * (w - x));
        let r = try_mixed_partial_log(
            |x, y| Ok(f(x, y)),
            1.0,
            0.05,
            Interval::positive(),
            Interval::unit(),
            &DiffSpec {
                base_step: 1e-3,
                richardson_levels: 2,
            },
        )
        .unwrap();
        assert!((r.value - 20.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn non_positive_density_rejected() {
        let err = mixed_partial(|x, _| x, 0.0, 0.0, &DiffSpec::default()).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDensity { .. }));
    }
}
