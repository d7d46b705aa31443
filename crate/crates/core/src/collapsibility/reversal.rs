use serde::Serialize;

use super::GridSpec;
use crate::measures::{evaluate, MeasureKind, MeasurePoint};
use crate::model::ConditionalModel;
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReversalWitness {
    pub x: f64,
    pub y: Option<f64>,
    pub marginal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversalReport {
    pub measure: MeasureKind,
    pub reversal: bool,
    /// `+1` or `-1` when every conditional value is strictly signed, else 0.
    pub conditional_sign: i8,
    pub conditional_min: f64,
    pub conditional_max: f64,
    /// Grid points where the marginal measure has the opposite strict sign.
    pub witnesses: Vec<ReversalWitness>,
}

/// A Yule-Simpson reversal: the conditional measure has one strict sign at
/// every `(x, y, w)` of the grid while the marginal measure has the opposite
/// strict sign somewhere. "Strict" means beyond `tol_abs`.
pub fn detect_reversal(
    measure: MeasureKind,
    model: &ConditionalModel,
    grid: &GridSpec,
) -> Result<ReversalReport> {
    grid.validate()?;
    measure.check_capabilities(model)?;
    let pairs = grid.xy_pairs(measure)?;
    let tol = grid.tol_abs;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pairs {
        let ws = if grid.w_points.is_empty() {
            model.probe_ws(x)?
        } else {
            grid.w_points.clone()
        };
        for w in ws {
            let v = evaluate(measure, model, MeasurePoint::new(x, y, Some(w)))?.value;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let sign: i8 = if lo > tol {
        1
    } else if hi < -tol {
        -1
    } else {
        0
    };
    let mut witnesses = Vec::new();
    if sign != 0 {
        for &(x, y) in &pairs {
            let m = evaluate(measure, model, MeasurePoint::new(x, y, None))?.value;
            if f64::from(sign) * m < -tol {
                witnesses.push(ReversalWitness { x, y, marginal: m });
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFiniteEvaluation { at: grid.x_points[0] });
    }
    Ok(ReversalReport {
        measure,
        reversal: !witnesses.is_empty(),
        conditional_sign: sign,
        conditional_min: lo,
        conditional_max: hi,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::model::{CovariateLaw, ResponseLaw};

    #[test]
    fn confounded_linear_model_reverses() {
        let m = ConditionalModel::builder("cochran")
            .covariate(CovariateLaw::family(|x| Family::normal(2.0 * x, 1.0)))
            .response(ResponseLaw::from_mean(|x, w| Ok(x - w)))
            .build()
            .unwrap();
        let grid = GridSpec::new(&[-1.0, 0.0, 1.0]).with_w(&[-2.0, 0.0, 2.0]);
        let r = detect_reversal(MeasureKind::Edf, &m, &grid).unwrap();
        assert!(r.reversal);
        assert_eq!(r.conditional_sign, 1);
        assert_eq!(r.witnesses.len(), 3);
        assert!(r.witnesses.iter().all(|w| (w.marginal + 1.0).abs() < 1e-6));
    }

    #[test]
    fn no_reversal_without_confounding() {
        let m = ConditionalModel::builder("free")
            .covariate(CovariateLaw::family(|_| Family::normal(0.0, 1.0)))
            .response(ResponseLaw::from_mean(|x, w| Ok(x - w)))
            .build()
            .unwrap();
        let r = detect_reversal(MeasureKind::Edf, &m, &GridSpec::new(&[0.0, 1.0]).with_w(&[0.0, 1.0])).unwrap();
        assert!(!r.reversal);
    }
}
