use super::models;
use super::{CheckRecord, CheckStatus, RunOptions, Scenario, ScenarioModel, ScenarioReport};
use crate::collapsibility::{
    check_average, check_simple, detect_reversal, probe_conditions, Classification, CollapsibilityVerdict,
    GridSpec, PointRecord, ProbeReport, ProbeStatus, COVARIATE_FREE_OF_X, MEAN_HOMOGENEOUS,
    X_INDEP_W_GIVEN_Y, Y_INDEP_W_GIVEN_X, Y_SLOPE_MATCHES,
};
use crate::measures::MeasureKind;
use crate::model::{condition_from_joint, ConditionalModel};
use crate::multivariate::{
    bivariate_implications, check_average_bivariate, probe_conditions_bivariate, BivariateCovariateModel,
    BivariateVerdict, SplitCovariateGrid, A_X_INDEP_W2, A_Y_INDEP_W1_GIVEN_XW2, STANDING_W1_INDEP_W2,
};
use crate::prelude::*;
use crate::regression::{check_beta_collapsibility, RegressionSpec, SE_MULTIPLE};
use crate::{Error, Result};

struct Outcome {
    observed: String,
    gap: Option<f64>,
    tolerance: Option<f64>,
    status: CheckStatus,
}

impl Outcome {
    fn flag(ok: bool, observed: impl Into<String>) -> Self {
        Self {
            observed: observed.into(),
            gap: None,
            tolerance: None,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        }
    }

    fn within(gap: f64, tolerance: f64, observed: impl Into<String>) -> Self {
        Self {
            observed: observed.into(),
            gap: Some(gap),
            tolerance: Some(tolerance),
            status: if gap <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
        }
    }

    fn indeterminate(observed: impl Into<String>) -> Self {
        Self {
            observed: observed.into(),
            gap: None,
            tolerance: None,
            status: CheckStatus::Indeterminate,
        }
    }

    fn verdict(v: &CollapsibilityVerdict, want: Classification) -> Self {
        let observed = format!("{:?}", v.classification);
        let mut o = if v.classification == Classification::Indeterminate {
            Self::indeterminate(observed)
        } else {
            Self::flag(v.classification == want, observed)
        };
        o.gap = v.max_average_gap;
        o
    }

    fn probe(report: &ProbeReport, name: &str, want: ProbeStatus) -> Self {
        match report.get(name) {
            None => Self::indeterminate(format!("{name} was not probed")),
            Some(p) if p.status == ProbeStatus::Unavailable => {
                Self::indeterminate(format!("{name} unavailable: {}", p.note.as_deref().unwrap_or("")))
            }
            Some(p) => {
                let mut o = Self::flag(p.status == want, format!("{name}: {:?}", p.status));
                o.gap = p.deviation;
                o.tolerance = Some(p.tolerance);
                o
            }
        }
    }
}

struct Recorder<'a> {
    scenario: &'a Scenario,
    records: Vec<CheckRecord>,
}

impl Recorder<'_> {
    fn push(&mut self, check: &str, outcome: Result<Outcome>) -> Result<()> {
        let e = self
            .scenario
            .expected
            .iter()
            .find(|e| e.check == check)
            .ok_or_else(|| Error::params(format!("{} does not declare the check {check}", self.scenario.name)))?;
        let o = match outcome {
            Ok(o) => o,
            Err(err) if err.is_numerical() => Outcome::indeterminate(err.to_string()),
            Err(err) => return Err(err),
        };
        self.records.push(CheckRecord {
            check: e.check.into(),
            expected: e.expected.into(),
            provenance: e.provenance,
            observed: o.observed,
            gap: o.gap,
            tolerance: o.tolerance,
            status: o.status,
        });
        Ok(())
    }
}

#[derive(Default)]
struct Extras {
    verdicts: Vec<CollapsibilityVerdict>,
    bivariate: Vec<BivariateVerdict>,
    coefficient: Option<crate::regression::CoefficientVerdict>,
    probes: Option<ProbeReport>,
    notes: Vec<String>,
}

pub(super) fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    let mut rec = Recorder { scenario: s, records: Vec::new() };
    let mut extras = Extras::default();
    match (s.name, &s.model) {
        ("uniform_normal", ScenarioModel::Conditional(m)) => uniform_normal(s, m, opts, &mut rec, &mut extras)?,
        ("homogeneous_uniform" | "homogeneous_gamma", ScenarioModel::Conditional(m)) => {
            homogeneous(s, m, opts, &mut rec, &mut extras)?
        }
        ("power_density" | "power_density_tempered", ScenarioModel::Conditional(m)) => {
            power(s, m, opts, &mut rec, &mut extras)?
        }
        ("poisson_gamma" | "nb_regression", ScenarioModel::Conditional(m)) => {
            counts(s, m, opts, &mut rec, &mut extras)?
        }
        ("product_mean", ScenarioModel::Conditional(m)) => product(s, m, opts, &mut rec, &mut extras)?,
        ("cochran_reversal", ScenarioModel::Regression(spec)) => cochran(s, spec, opts, &mut rec, &mut extras)?,
        ("xwy_chain", ScenarioModel::Joint(spec)) => {
            let (m, diag) = condition_from_joint(spec)?;
            rec.push(
                "joint-mass",
                Ok(Outcome::flag(!diag.mass_flagged, format!("total mass {:.12}", diag.total_mass))),
            )?;
            chain(s, &m, opts, &mut rec, &mut extras)?
        }
        ("bivariate_w" | "bivariate_w_broken", ScenarioModel::Bivariate(m)) => {
            bivariate(s, m, opts, &mut rec, &mut extras)?
        }
        (name, _) => return Err(Error::UnknownScenario(name.into())),
    }
    for e in &s.expected {
        if !rec.records.iter().any(|r| r.check == e.check) {
            return Err(Error::params(format!("{}: check {} was not run", s.name, e.check)));
        }
    }
    let status = rec.records.iter().map(|r| r.status).max().unwrap_or(CheckStatus::Pass);
    Ok(ScenarioReport {
        scenario: s.name.into(),
        description: s.description.into(),
        seed: opts.seed,
        parameters: s.parameters.iter().map(|(n, v)| ((*n).into(), *v)).collect(),
        checks: rec.records,
        verdicts: extras.verdicts,
        bivariate: extras.bivariate,
        coefficient: extras.coefficient,
        probes: extras.probes,
        notes: extras.notes,
        status,
    })
}

fn grid_for(opts: &RunOptions, mut grid: GridSpec) -> GridSpec {
    if let Some(xs) = &opts.x_points {
        grid.x_points = xs.clone();
    }
    if let Some(ys) = &opts.y_points {
        grid.y_points = ys.clone();
    }
    if let Some(t) = opts.tol_abs {
        grid.tol_abs = t;
    }
    if let Some(t) = opts.tol_rel {
        grid.tol_rel = t;
    }
    grid
}

/// Largest `|observed - truth|` over `points`; a point without an observed
/// value makes the outcome indeterminate.
fn closed_gap<'p, I, O, T>(points: I, observed: O, truth: T, tol: f64, what: &str) -> Result<Outcome>
where
    I: IntoIterator<Item = &'p PointRecord>,
    O: Fn(&PointRecord) -> Option<f64>,
    T: Fn(&PointRecord) -> Result<f64>,
{
    let mut worst = 0.0f64;
    let mut count = 0;
    for p in points {
        let Some(v) = observed(p) else {
            return Ok(Outcome::indeterminate(format!(
                "{what} unavailable at x = {}: {}",
                p.x,
                p.error.as_deref().unwrap_or("no value")
            )));
        };
        let gap = (v - truth(p)?).abs();
        worst = if gap.is_nan() { f64::NAN } else { worst.max(gap) };
        count += 1;
    }
    Ok(Outcome::within(worst, tol, format!("max |{what} - closed form| = {worst:.3e} over {count} point(s)")))
}

fn decomposition<'p>(points: impl IntoIterator<Item = &'p PointRecord>) -> Outcome {
    let mut worst = 0.0f64;
    let mut budget = f64::INFINITY;
    let mut ok = true;
    for p in points {
        match p.decomposition() {
            Some((gap, b)) => {
                ok &= gap <= b;
                worst = worst.max(gap);
                budget = budget.min(b);
            }
            None => return Outcome::indeterminate(format!("no decomposition at x = {}", p.x)),
        }
    }
    Outcome {
        observed: format!("max |marginal - conditional - residual| = {worst:.3e}, smallest budget {budget:.3e}"),
        gap: Some(worst),
        tolerance: Some(budget),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
    }
}

/// No verdict contradicts a passing sufficient condition.
fn implication(probes: &ProbeReport, verdicts: &[&CollapsibilityVerdict]) -> Outcome {
    let mut implied = 0;
    let mut violations = Vec::new();
    for v in verdicts {
        let passing = probes.passing_for(v.measure);
        if passing.is_empty() {
            continue;
        }
        implied += 1;
        if v.classification == Classification::NotCollapsible {
            violations.push(format!("{} fails despite {}", v.measure.name(), passing.join(", ")));
        }
    }
    if violations.is_empty() {
        Outcome::flag(true, format!("{implied} of {} verdict(s) implied by passing conditions, none contradicted", verdicts.len()))
    } else {
        Outcome::flag(false, violations.join("; "))
    }
}

fn uniform_normal(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let grid = grid_for(opts, GridSpec::new(&[0.5, 1.0, 1.5, 2.0]).with_w(&[0.0, 1.0, 2.0]));
    let probes = probe_conditions(m, &grid)?;
    let v = check_simple(MeasureKind::Edf, m, &grid)?.with_probes(probes.clone());
    rec.push("edf-average-collapsible", Ok(Outcome::verdict(&v, Classification::AverageCollapsible)))?;
    let marg = s.closed_form("marginal_edf")?;
    let cond = s.closed_form("conditional_average_edf")?;
    let resid = s.closed_form("edf_residual")?;
    rec.push(
        "edf-marginal-closed-form",
        closed_gap(v.average_points(), |p| Some(p.marginal?.value), |p| marg.eval(&[p.x]), 1e-5, "marginal EDF"),
    )?;
    rec.push(
        "edf-conditional-average-closed-form",
        closed_gap(v.average_points(), |p| Some(p.conditional?.value), |p| cond.eval(&[p.x]), 1e-5, "averaged EDF"),
    )?;
    rec.push(
        "edf-residual-vanishes",
        closed_gap(v.average_points(), |p| Some(p.residual?.value), |p| resid.eval(&[p.x]), 1e-6, "residual"),
    )?;
    rec.push("decomposition-identity", Ok(decomposition(v.average_points())))?;
    let mean = s.closed_form("marginal_mean")?;
    let mean_gap = (|| -> Result<Outcome> {
        let mut worst = 0.0f64;
        for &x in &grid.x_points {
            worst = worst.max((m.marginal_mean(x)?.value - mean.eval(&[x])?).abs());
        }
        Ok(Outcome::within(worst, 1e-8, format!("max |E(Y|x) - (x²+1)/2| = {worst:.3e}")))
    })();
    rec.push("marginal-mean-closed-form", mean_gap)?;
    let both = [MEAN_HOMOGENEOUS, COVARIATE_FREE_OF_X].map(|n| Outcome::probe(&probes, n, ProbeStatus::Fail));
    let status = both.iter().map(|o| o.status).max().unwrap_or(CheckStatus::Pass);
    rec.push(
        "sufficient-conditions-fail",
        Ok(Outcome {
            observed: both.iter().map(|o| o.observed.as_str()).collect::<Vec<_>>().join("; "),
            gap: None,
            tolerance: None,
            status,
        }),
    )?;
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.probes = Some(probes);
    Ok(())
}

fn homogeneous(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let grid = grid_for(opts, GridSpec::new(&[0.5, 1.0, 1.5, 2.0]).with_w(&[0.5, 1.0, 2.0]));
    let probes = probe_conditions(m, &grid)?;
    if s.name == "homogeneous_gamma" {
        let truth = s.closed_form("conditional_mean")?;
        let gap = (|| -> Result<Outcome> {
            let mut worst = 0.0f64;
            for &x in &grid.x_points {
                for &w in &grid.w_points {
                    worst = worst.max((m.conditional_mean(x, w)?.value - truth.eval(&[x, w])?).abs());
                }
            }
            Ok(Outcome::within(worst, 1e-8, format!("max |E(Y|x,w) - x| = {worst:.3e}")))
        })();
        rec.push("conditional-mean-closed-form", gap)?;
    }
    let v = check_simple(MeasureKind::Edf, m, &grid)?.with_probes(probes.clone());
    rec.push("edf-simple-collapsible", Ok(Outcome::verdict(&v, Classification::SimpleCollapsible)))?;
    let marg = s.closed_form("marginal_edf")?;
    rec.push(
        "edf-marginal-closed-form",
        closed_gap(v.average_points(), |p| Some(p.marginal?.value), |p| marg.eval(&[p.x]), 1e-5, "marginal EDF"),
    )?;
    rec.push("mean-homogeneity-passes", Ok(Outcome::probe(&probes, MEAN_HOMOGENEOUS, ProbeStatus::Pass)))?;
    if s.name == "homogeneous_uniform" {
        rec.push("y-depends-on-w", Ok(Outcome::probe(&probes, Y_INDEP_W_GIVEN_X, ProbeStatus::Fail)))?;
    }
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.probes = Some(probes);
    Ok(())
}

/// Points where the truncated conditional supports lose less than this mass.
const SAFE_TAIL: f64 = 1e-4;

fn power(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let grid = grid_for(
        opts,
        GridSpec::new(&[0.75, 1.0, 1.5]).with_y(&[0.02, 0.05]).with_w(&[-1.0, 0.5, 1.0, 2.0]),
    );
    let probes = probe_conditions(m, &grid)?;
    let v = check_average(MeasureKind::Mdi, m, &grid)?.with_probes(probes.clone());
    rec.push("mdi-average-collapsible", Ok(Outcome::verdict(&v, Classification::AverageCollapsible)))?;
    let mdi = s.closed_form("mdi")?;
    rec.push(
        "mdi-equals-inverse-y",
        closed_gap(
            v.average_points(),
            |p| {
                let t = 1.0 / p.y?;
                Some(if (p.conditional?.value - t).abs() > (p.marginal?.value - t).abs() {
                    p.conditional?.value
                } else {
                    p.marginal?.value
                })
            },
            |p| mdi.eval(&[p.y.unwrap_or(f64::NAN), p.x]),
            1e-3,
            "MDI",
        ),
    )?;

    let density = s.closed_form("marginal_density")?;
    let tail = s.closed_form("truncation_tail")?;
    let mut pairs: Vec<(f64, f64)> = grid.xy_pairs(MeasureKind::Mdi)?.into_iter().map(|(x, y)| (y.unwrap_or(f64::NAN), x)).collect();
    if !pairs.contains(&(0.05, 1.0)) {
        pairs.push((0.05, 1.0));
    }
    let lambda = s.parameter("lambda").unwrap_or(0.0);
    let truncated = models::power_density(lambda, true)?;
    let check = (|| -> Result<Outcome> {
        let mut worst = 0.0f64;
        let mut safe = Vec::new();
        for &(y, x) in &pairs {
            let closed = density.eval(&[y, x])?;
            let t = tail.eval(&[y, x])?;
            match truncated.marginal_density(y, x) {
                Ok(f) => ex.notes.push(format!(
                    "f(y={y}|x={x}): closed form {closed:.6}, truncated supports {:.6}, truncation tail {t:.2e}",
                    f.value
                )),
                Err(e) => ex.notes.push(format!("f(y={y}|x={x}) with truncated supports unavailable: {e}")),
            }
            if t < SAFE_TAIL {
                worst = worst.max((m.marginal_density(y, x)?.value - closed).abs());
                safe.push(format!("({y}, {x})"));
            }
        }
        if safe.is_empty() {
            return Ok(Outcome::indeterminate("no (y, x) point with truncation tail below 1e-4"));
        }
        Ok(Outcome::within(
            worst,
            1e-4,
            format!("max |f(y|x) - closed form| = {worst:.3e} at safe points {}", safe.join(" ")),
        ))
    })();
    rec.push("marginal-density-closed-form", check)?;
    if s.name == "power_density" {
        rec.push("y-slope-condition-passes", Ok(Outcome::probe(&probes, Y_SLOPE_MATCHES, ProbeStatus::Pass)))?;
        rec.push("y-depends-on-w", Ok(Outcome::probe(&probes, Y_INDEP_W_GIVEN_X, ProbeStatus::Fail)))?;
    }
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.probes = Some(probes);
    Ok(())
}

const PMF_MAX_Y: u64 = 50;

fn counts(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let xs: &[f64] = if s.name == "poisson_gamma" { &[1.0, 2.0] } else { &[0.0, 1.0] };
    let grid = grid_for(opts, GridSpec::new(xs));
    let pmf = s.closed_form("marginal_pmf")?;
    let check = (|| -> Result<Outcome> {
        let mut worst = 0.0f64;
        for &x in &grid.x_points {
            for k in 0..=PMF_MAX_Y {
                worst = worst.max((m.marginal_pmf(k, x)?.value - pmf.eval(&[k as f64, x])?).abs());
            }
        }
        Ok(Outcome::within(worst, 1e-8, format!("max |mixture pmf - NB pmf| = {worst:.3e}")))
    })();
    rec.push("marginal-pmf-closed-form", check)?;
    if s.name == "nb_regression" {
        let mean = s.closed_form("marginal_mean")?;
        let var = s.closed_form("marginal_variance")?;
        let check = (|| -> Result<Outcome> {
            let mut worst = 0.0f64;
            let mut over = true;
            for &x in &grid.x_points {
                let mo = m.marginal_count_moments(x)?;
                worst = worst.max((mo.variance - var.eval(&[x])?).abs());
                over &= mo.variance > mo.mean && var.eval(&[x])? > mean.eval(&[x])?;
            }
            let mut o = Outcome::within(worst, 1e-6, format!("max |Var(Y|x) - λ(1+λ/θ)| = {worst:.3e}, overdispersed: {over}"));
            if !over {
                o.status = CheckStatus::Fail;
            }
            Ok(o)
        })();
        rec.push("variance-identity", check)?;
    }
    let probes = probe_conditions(m, &grid)?;
    let led = check_average(MeasureKind::Led, m, &grid)?.with_probes(probes.clone());
    rec.push("led-average-collapsible", Ok(Outcome::verdict(&led, Classification::AverageCollapsible)))?;
    let beta = s.closed_form("led")?;
    rec.push(
        "led-equals-beta",
        closed_gap(
            led.average_points(),
            |p| {
                let b = beta.eval(&[p.x]).ok()?;
                let (c, mg) = (p.conditional?.value, p.marginal?.value);
                Some(if (c - b).abs() > (mg - b).abs() { c } else { mg })
            },
            |p| beta.eval(&[p.x]),
            1e-6,
            "LED",
        ),
    )?;
    let edf = check_average(MeasureKind::Edf, m, &grid)?;
    rec.push("edf-average-collapsible", Ok(Outcome::verdict(&edf, Classification::AverageCollapsible)))?;
    if s.name == "nb_regression" {
        rec.push(
            "covariate-independence-passes",
            Ok(Outcome::probe(&probes, COVARIATE_FREE_OF_X, ProbeStatus::Pass)),
        )?;
    }
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&led, &edf])))?;
    ex.verdicts.push(led);
    ex.verdicts.push(edf);
    ex.probes = Some(probes);
    Ok(())
}

fn product(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let grid = grid_for(opts, GridSpec::new(&[0.5, 1.0, 1.5, 2.0]));
    let probes = probe_conditions(m, &grid)?;
    let v = check_average(MeasureKind::Edf, m, &grid)?.with_probes(probes.clone());
    rec.push("edf-not-collapsible", Ok(Outcome::verdict(&v, Classification::NotCollapsible)))?;
    let gap = s.closed_form("gap")?;
    rec.push(
        "edf-gap-equals-x",
        closed_gap(v.average_points(), |p| p.gap, |p| gap.eval(&[p.x]), 1e-5, "gap"),
    )?;
    rec.push("decomposition-identity", Ok(decomposition(v.average_points())))?;
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.probes = Some(probes);
    Ok(())
}

fn cochran(s: &Scenario, spec: &RegressionSpec, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let pop = models::linear_population(spec)?;
    let grid = grid_for(opts, GridSpec::new(&[-1.0, 0.0, 1.0]));
    let probes = probe_conditions(&pop, &grid)?;
    let reversal = detect_reversal(MeasureKind::Edf, &pop, &grid)?;
    rec.push(
        "population-reversal-flagged",
        Ok(Outcome::flag(
            reversal.reversal,
            format!(
                "conditional EDF in [{:.6}, {:.6}], {} opposite-sign marginal witness(es)",
                reversal.conditional_min,
                reversal.conditional_max,
                reversal.witnesses.len()
            ),
        )),
    )?;
    let v = check_average(MeasureKind::Edf, &pop, &grid)?.with_probes(probes.clone()).with_reversal(reversal);
    rec.push("edf-not-collapsible", Ok(Outcome::verdict(&v, Classification::NotCollapsible)))?;
    let cs = s.closed_form("conditional_slope")?.eval(&[])?;
    let ms = s.closed_form("marginal_slope")?.eval(&[])?;
    rec.push(
        "population-slopes",
        closed_gap(
            v.average_points(),
            |p| Some((p.conditional?.value - cs).abs().max((p.marginal?.value - ms).abs())),
            |_| Ok(0.0),
            1e-5,
            "EDF",
        ),
    )?;

    let n = s.parameter("n").map_or(super::DEFAULT_COCHRAN_N, |v| v as usize);
    let cv = check_beta_collapsibility(spec, n, opts.seed, &[0.0])?;
    let slope = |fit: &crate::regression::FitResult, truth: f64| {
        let b = fit.coefficient("x").unwrap_or(f64::NAN);
        let se = fit.std_error("x").unwrap_or(f64::NAN);
        Outcome::within((b - truth).abs(), SE_MULTIPLE * se, format!("slope {b:.6} (SE {se:.2e})"))
    };
    match &cv.conditional_fit {
        Some(fit) => rec.push("ols-conditional-slope", Ok(slope(fit, cs)))?,
        None => rec.push("ols-conditional-slope", Ok(Outcome::indeterminate("no conditional fit")))?,
    }
    rec.push("ols-marginal-slope", Ok(slope(&cv.marginal_fit, ms)))?;
    rec.push(
        "coefficient-reversal-flagged",
        Ok(Outcome::flag(
            cv.classification == Classification::NotCollapsible && cv.reversal_flag,
            format!("{:?}, reversal {}, gap {:.4}", cv.classification, cv.reversal_flag, cv.max_gap),
        )),
    )?;
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.coefficient = Some(cv);
    ex.probes = Some(probes);
    Ok(())
}

fn chain(s: &Scenario, m: &ConditionalModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let grid = grid_for(opts, GridSpec::new(&[0.0, 0.5, 1.0]).with_y(&[-0.5, 0.0, 0.5]));
    let probes = probe_conditions(m, &grid)?;
    let mut o = Outcome::probe(&probes, X_INDEP_W_GIVEN_Y, ProbeStatus::Pass);
    if o.status == CheckStatus::Pass && !o.gap.is_some_and(|d| d < 1e-4) {
        o.status = CheckStatus::Fail;
    }
    rec.push("x-w-independence-given-y-passes", Ok(o))?;
    let v = check_average(MeasureKind::Mdi, m, &grid)?.with_probes(probes.clone());
    rec.push("mdi-average-collapsible", Ok(Outcome::verdict(&v, Classification::AverageCollapsible)))?;
    let mdi = s.closed_form("mdi")?;
    rec.push(
        "mdi-closed-form",
        closed_gap(
            v.average_points(),
            |p| {
                let t = mdi.eval(&[p.y?, p.x]).ok()?;
                let (c, mg) = (p.conditional?.value, p.marginal?.value);
                Some(if (c - t).abs() > (mg - t).abs() { c } else { mg })
            },
            |p| mdi.eval(&[p.y.unwrap_or(f64::NAN), p.x]),
            1e-3,
            "MDI",
        ),
    )?;
    let fy = s.closed_form("conditional_density")?;
    let fw = s.closed_form("covariate_density")?;
    let laws = (|| -> Result<Outcome> {
        let mut worst = 0.0f64;
        for &(y, x, w) in &[(0.0, 0.5, -0.5), (0.5, 1.0, 0.3), (-0.5, 0.0, 1.0)] {
            worst = worst.max((m.conditional_density(y, x, w)? - fy.eval(&[y, x, w])?).abs());
            worst = worst.max((m.covariate_density(w, x)? - fw.eval(&[w, x])?).abs());
        }
        Ok(Outcome::within(worst, 1e-6, format!("max density deviation {worst:.3e}")))
    })();
    rec.push("conditional-laws-closed-form", laws)?;
    rec.push(super::IMPLICATION_CHECK, Ok(implication(&probes, &[&v])))?;
    ex.verdicts.push(v);
    ex.probes = Some(probes);
    Ok(())
}

fn bivariate(s: &Scenario, m: &BivariateCovariateModel, opts: &RunOptions, rec: &mut Recorder, ex: &mut Extras) -> Result<()> {
    let mut split = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]).with_y(&[0.0, 1.5]);
    let flat = grid_for(opts, split.as_grid());
    split.x_points = flat.x_points.clone();
    split.y_points = flat.y_points.clone();
    split.tol_abs = flat.tol_abs;
    split.tol_rel = flat.tol_rel;
    let probes = probe_conditions_bivariate(m, &split)?;
    let bv = check_average_bivariate(MeasureKind::Edf, m, &split)?;
    let v = &bv.verdict;
    let broken = s.name == "bivariate_w_broken";
    if broken {
        rec.push("edf-not-collapsible", Ok(Outcome::verdict(v, Classification::NotCollapsible)))?;
        rec.push(
            "edf-gap-one",
            closed_gap(v.average_points(), |p| p.gap, |_| Ok(1.0), 1e-4, "gap"),
        )?;
        rec.push("covariate-independence-fails", Ok(Outcome::probe(&probes, A_X_INDEP_W2, ProbeStatus::Fail)))?;
    } else {
        rec.push("edf-average-collapsible", Ok(Outcome::verdict(v, Classification::AverageCollapsible)))?;
        let marg = s.closed_form("marginal_edf")?;
        rec.push(
            "edf-equals-one",
            closed_gap(
                v.average_points(),
                |p| Some((p.conditional?.value - 1.0).abs().max((p.marginal?.value - 1.0).abs())),
                |p| Ok(marg.eval(&[p.x])? - 1.0),
                1e-5,
                "EDF",
            ),
        )?;
        let all = [STANDING_W1_INDEP_W2, A_Y_INDEP_W1_GIVEN_XW2, A_X_INDEP_W2]
            .map(|n| Outcome::probe(&probes, n, ProbeStatus::Pass));
        let status = all.iter().map(|o| o.status).max().unwrap_or(CheckStatus::Pass);
        rec.push(
            "conditions-a-pass",
            Ok(Outcome {
                observed: all.iter().map(|o| o.observed.as_str()).collect::<Vec<_>>().join("; "),
                gap: None,
                tolerance: None,
                status,
            }),
        )?;
    }
    rec.push(
        "fubini-consistency",
        Ok(Outcome::within(
            bv.fubini_gap,
            bv.fubini_budget + 1e-12,
            format!("order swap moves the average by {:.3e}", bv.fubini_gap),
        )),
    )?;
    let mdi = check_average_bivariate(MeasureKind::Mdi, m, &split)?;
    let implied = bivariate_implications(&probes);
    let contradicted: Vec<&str> = [v, &mdi.verdict]
        .iter()
        .filter(|v| implied.contains(&v.measure) && v.classification == Classification::NotCollapsible)
        .map(|v| v.measure.name())
        .collect();
    rec.push(
        super::IMPLICATION_CHECK,
        Ok(Outcome::flag(
            contradicted.is_empty(),
            format!(
                "implied measures [{}]; EDF {:?}, MDI {:?}",
                implied.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
                v.classification,
                mdi.verdict.classification
            ),
        )),
    )?;
    ex.bivariate.push(bv);
    ex.bivariate.push(mdi);
    ex.probes = Some(probes);
    Ok(())
}
