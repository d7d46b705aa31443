use super::{BivariateCovariateModel, Order, SplitCovariateGrid};
use crate::collapsibility::{ProbeOutcome, ProbeReport, ProbeStatus, CONDITIONING_TOL};
use crate::measures::MeasureKind;
use crate::model::{CovariateLaw, HOMOGENEITY_TOL};
use crate::numerics::EstimatedReal;
use crate::prelude::*;
use crate::{Error, Result};

pub const STANDING_W1_INDEP_W2: &str = "w1-independent-of-w2-given-x";
pub const A_Y_INDEP_W1_GIVEN_XW2: &str = "a-y-independent-of-w1-given-x-w2";
pub const A_X_INDEP_W2: &str = "a-x-independent-of-w2";
pub const B_Y_INDEP_W1_GIVEN_X: &str = "b-y-independent-of-w1-given-x";
pub const B_X_INDEP_W2_GIVEN_Y: &str = "b-x-independent-of-w2-given-y";
pub const SWAPPED_X_INDEP_W1_GIVEN_Y: &str = "b-swapped-x-independent-of-w1-given-y";
pub const SWAPPED_Y_INDEP_W2_GIVEN_X: &str = "b-swapped-y-independent-of-w2-given-x";

const NEGLIGIBLE_DENSITY: f64 = 1e-12;

fn relative(a: f64, reference: f64) -> f64 {
    (a - reference).abs() / reference.abs().max(1.0)
}

fn points_or_probes(given: &[f64], law: &CovariateLaw, xs: &[f64]) -> Result<Vec<f64>> {
    if !given.is_empty() {
        return Ok(given.to_vec());
    }
    let mut v = Vec::new();
    for &x in xs {
        v.extend(law.probe_points(x)?);
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    Ok(v)
}

struct Ctx<'a> {
    m: &'a BivariateCovariateModel,
    xs: Vec<f64>,
    ys: Vec<f64>,
    w1s: Vec<f64>,
    w2s: Vec<f64>,
}

impl Ctx<'_> {
    fn density_ready(&self) -> Result<()> {
        if self.m.density.is_none() {
            return Err(Error::missing("conditional density"));
        }
        if self.ys.is_empty() {
            return Err(Error::params("no y points"));
        }
        Ok(())
    }

    fn law_free_of_x(&self, law: &CovariateLaw, ws: &[f64]) -> Result<f64> {
        if self.xs.len() < 2 {
            return Err(Error::params("comparing a covariate law across x needs two x points"));
        }
        let quad = &self.m.settings.quadrature;
        let x_ref = self.xs[0];
        let mut dev = 0f64;
        if let CovariateLaw::PointMass(v) = law {
            let r = v(x_ref)?;
            for &x in &self.xs[1..] {
                dev = dev.max(relative(v(x)?, r));
            }
            return Ok(dev);
        }
        for &w in ws {
            let r = law.density(w, x_ref, quad)?;
            for &x in &self.xs[1..] {
                dev = dev.max(relative(law.density(w, x, quad)?, r));
            }
        }
        Ok(dev)
    }

    /// `f(y|x,w1)` (component 1 fixed) or `f(y|x,w2)` (component 2 fixed).
    fn partial_density(&self, y: f64, x: f64, fixed: usize, w: f64) -> Result<f64> {
        let quad = &self.m.settings.quadrature;
        let r = if fixed == 1 {
            self.m.w2.expect(x, |b| Ok(EstimatedReal::exact(self.m.conditional_density(y, x, w, b)?)), quad)?
        } else {
            self.m.w1.expect(x, |a| Ok(EstimatedReal::exact(self.m.conditional_density(y, x, a, w)?)), quad)?
        };
        Ok(r.value)
    }

    /// `f(y|x, w_fixed)` compared across the values of that component.
    fn partial_free_of_w(&self, fixed: usize) -> Result<f64> {
        self.density_ready()?;
        let ws = if fixed == 1 { &self.w1s } else { &self.w2s };
        if ws.len() < 2 {
            return Err(Error::params("comparing across w needs two w points"));
        }
        let mut dev = 0f64;
        for &x in &self.xs {
            for &y in &self.ys {
                let r = self.partial_density(y, x, fixed, ws[0])?;
                for &w in &ws[1..] {
                    dev = dev.max(relative(self.partial_density(y, x, fixed, w)?, r));
                }
            }
        }
        Ok(dev)
    }

    /// `f(w|x,y) = f(y|x,w) f(w|x) / f(y|x)` compared across x, for one
    /// component `w`.
    fn component_free_of_x_given_y(&self, fixed: usize) -> Result<f64> {
        self.density_ready()?;
        if self.xs.len() < 2 {
            return Err(Error::params("comparing across x needs two x points"));
        }
        let quad = &self.m.settings.quadrature;
        let (law, ws) = if fixed == 1 { (&self.m.w1, &self.w1s) } else { (&self.m.w2, &self.w2s) };
        let mut dev = 0f64;
        let mut compared = 0usize;
        for &y in &self.ys {
            let mut reference: Option<Vec<f64>> = None;
            for &x in &self.xs {
                let fy = self.m.marginal_density(y, x)?.value;
                if fy < NEGLIGIBLE_DENSITY {
                    continue;
                }
                let mut row = Vec::with_capacity(ws.len());
                for &w in ws {
                    row.push(self.partial_density(y, x, fixed, w)? * law.density(w, x, quad)? / fy);
                }
                match &reference {
                    None => reference = Some(row),
                    Some(r) => {
                        for (a, b) in row.iter().zip(r) {
                            dev = dev.max(relative(*a, *b));
                            compared += 1;
                        }
                    }
                }
            }
        }
        if compared == 0 {
            return Err(Error::params("no grid point has positive marginal density"));
        }
        Ok(dev)
    }

    /// `Y ⊥ W1 | (X, W2)`: the density (or, without one, the mean) given
    /// `(x, w1, w2)` compared across `w1`.
    fn y_free_of_w1_given_w2(&self) -> Result<(f64, Option<String>)> {
        if self.w1s.len() < 2 {
            return Err(Error::params("comparing across w1 needs two w1 points"));
        }
        let mut dev = 0f64;
        let use_density = self.m.density.is_some() && !self.ys.is_empty();
        for &x in &self.xs {
            for &b in &self.w2s {
                if use_density {
                    for &y in &self.ys {
                        let r = self.m.conditional_density(y, x, self.w1s[0], b)?;
                        for &a in &self.w1s[1..] {
                            dev = dev.max(relative(self.m.conditional_density(y, x, a, b)?, r));
                        }
                    }
                } else {
                    let r = self.m.conditional_mean(x, self.w1s[0], b)?.value;
                    for &a in &self.w1s[1..] {
                        dev = dev.max(relative(self.m.conditional_mean(x, a, b)?.value, r));
                    }
                }
            }
        }
        let note = (!use_density).then(|| "compared at the level of the conditional mean".to_string());
        Ok((dev, note))
    }
}

/// Probes the hypotheses of the bivariate sufficient conditions.
pub fn probe_conditions_bivariate(
    model: &BivariateCovariateModel,
    grid: &SplitCovariateGrid,
) -> Result<ProbeReport> {
    grid.validate()?;
    let xs = grid.x_points.clone();
    let w1s = points_or_probes(&grid.w1_points, &model.w1, &xs)?;
    let w2s = points_or_probes(&grid.w2_points, &model.w2, &xs)?;
    let ys = if grid.y_points.is_empty() {
        let mut v: Vec<f64> = xs
            .iter()
            .filter_map(|&x| {
                model
                    .expect(x, Order::W1Inner, |a, b| model.conditional_mean(x, a, b))
                    .ok()
                    .map(|m| m.value)
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    } else {
        grid.y_points.clone()
    };
    let ctx = Ctx { m: model, xs, ys, w1s, w2s };

    let mut probes = Vec::new();
    let mut push = |name: &'static str, condition: &'static str, tol: f64, r: Result<(f64, Option<String>)>| {
        let (status, deviation, note) = match r {
            Ok((d, note)) => (
                if d <= tol { ProbeStatus::Pass } else { ProbeStatus::Fail },
                Some(d),
                note,
            ),
            Err(e) => (ProbeStatus::Unavailable, None, Some(e.to_string())),
        };
        probes.push(ProbeOutcome {
            name,
            condition,
            implies: Vec::new(),
            status,
            deviation,
            tolerance: tol,
            note,
        });
    };
    push(
        STANDING_W1_INDEP_W2,
        "f(w1,w2|x) = f(w1|x) f(w2|x)",
        super::FACTORIZATION_TOL,
        Ok((model.factorization_deviation, None)),
    );
    push(
        A_Y_INDEP_W1_GIVEN_XW2,
        "Y independent of W1 given (X, W2)",
        HOMOGENEITY_TOL,
        ctx.y_free_of_w1_given_w2(),
    );
    push(
        A_X_INDEP_W2,
        "X independent of W2",
        HOMOGENEITY_TOL,
        ctx.law_free_of_x(&model.w2, &ctx.w2s).map(|d| (d, None)),
    );
    push(
        B_Y_INDEP_W1_GIVEN_X,
        "Y independent of W1 given X",
        CONDITIONING_TOL,
        ctx.partial_free_of_w(1).map(|d| (d, None)),
    );
    push(
        B_X_INDEP_W2_GIVEN_Y,
        "X independent of W2 given Y",
        CONDITIONING_TOL,
        ctx.component_free_of_x_given_y(2).map(|d| (d, None)),
    );
    push(
        SWAPPED_X_INDEP_W1_GIVEN_Y,
        "X independent of W1 given Y",
        CONDITIONING_TOL,
        ctx.component_free_of_x_given_y(1).map(|d| (d, None)),
    );
    push(
        SWAPPED_Y_INDEP_W2_GIVEN_X,
        "Y independent of W2 given X",
        CONDITIONING_TOL,
        ctx.partial_free_of_w(2).map(|d| (d, None)),
    );
    Ok(ProbeReport { probes })
}

/// Measures whose average collapsibility over `(W1, W2)` follows from the
/// passing probes.
pub fn bivariate_implications(report: &ProbeReport) -> Vec<MeasureKind> {
    let all = |names: &[&str]| names.iter().all(|n| report.passed(n));
    let mut out = Vec::new();
    if all(&[STANDING_W1_INDEP_W2, A_Y_INDEP_W1_GIVEN_XW2, A_X_INDEP_W2]) {
        out.push(MeasureKind::Edf);
    }
    if all(&[STANDING_W1_INDEP_W2, B_Y_INDEP_W1_GIVEN_X, B_X_INDEP_W2_GIVEN_Y])
        || all(&[STANDING_W1_INDEP_W2, SWAPPED_X_INDEP_W1_GIVEN_Y, SWAPPED_Y_INDEP_W2_GIVEN_X])
    {
        out.push(MeasureKind::Mdi);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::distributions::special::norm_pdf;
    use crate::numerics::Interval;

    fn gaussian(broken: bool) -> BivariateCovariateModel {
        BivariateCovariateModel::builder("g")
            .w1(CovariateLaw::family(|x| Family::normal(x, 1.0)))
            .w2(CovariateLaw::family(move |x| Family::normal(if broken { x } else { 0.0 }, 1.0)))
            .mean(|x, _, w2| Ok(x + w2))
            .density(|y, x, _, w2| Ok(norm_pdf(y - x - w2)), Interval::real_line())
            .build()
            .unwrap()
    }

    #[test]
    fn first_part_holds_by_construction() {
        let grid = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]).with_y(&[0.0, 1.5]);
        let r = probe_conditions_bivariate(&gaussian(false), &grid).unwrap();
        assert!(r.passed(STANDING_W1_INDEP_W2));
        assert!(r.passed(A_Y_INDEP_W1_GIVEN_XW2));
        assert!(r.passed(A_X_INDEP_W2));
        assert!(bivariate_implications(&r).contains(&MeasureKind::Edf));
    }

    #[test]
    fn broken_model_fails_x_independence() {
        let grid = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]).with_y(&[0.0, 1.5]);
        let r = probe_conditions_bivariate(&gaussian(true), &grid).unwrap();
        let p = r.get(A_X_INDEP_W2).unwrap();
        assert_eq!(p.status, ProbeStatus::Fail);
        assert!(p.deviation.unwrap() > 0.01);
        assert!(!bivariate_implications(&r).contains(&MeasureKind::Edf));
    }

    #[test]
    fn independent_triple_passes_everything() {
        let m = BivariateCovariateModel::builder("free")
            .w1(CovariateLaw::family(|_| Family::normal(0.0, 1.0)))
            .w2(CovariateLaw::family(|_| Family::normal(1.0, 2.0)))
            .density(|y, _, _, _| Ok(norm_pdf(y)), Interval::real_line())
            .build()
            .unwrap();
        let grid = SplitCovariateGrid::new(&[0.0, 1.0]).with_y(&[-0.5, 0.5]);
        let r = probe_conditions_bivariate(&m, &grid).unwrap();
        for p in &r.probes {
            assert_eq!(p.status, ProbeStatus::Pass, "{p:?}");
        }
        assert_eq!(bivariate_implications(&r), vec![MeasureKind::Edf, MeasureKind::Mdi]);
    }
}
