//! Acceptance suite: one `[PASS]` / `[FAIL]` line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use collapse_core::collapsibility::{
    check_average, detect_reversal, edf_conditional_average, edf_residual, probe_conditions, Classification, GridSpec,
    ProbeStatus, COVARIATE_FREE_OF_X, MEAN_HOMOGENEOUS, X_INDEP_W_GIVEN_Y, Y_INDEP_W_GIVEN_X, Y_SLOPE_MATCHES,
};
use collapse_core::distributions::{Family, FamilyTag, Seed};
use collapse_core::measures::{correlation_mc, edf, led, MeasureKind};
use collapse_core::model::{CovariateLaw, XFn};
use collapse_core::multivariate::{check_average_bivariate, SplitCovariateGrid};
use collapse_core::numerics::{differentiate, integrate, DiffSpec, Interval, QuadratureSpec};
use collapse_core::regression::{check_beta_collapsibility, fit_linear, simulate, Coefficients, RegressionFamily, RegressionSpec};
use collapse_core::scenarios::{self, models, CheckStatus, RunOptions, IMPLICATION_CHECK, SCENARIO_NAMES};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// `NB(r, q)` pmf by the ratio recurrence `p(k+1) = p(k) (k+r)/(k+1) (1-q)`.
fn nb_pmf_table(r: f64, q: f64, kmax: usize) -> Vec<f64> {
    let mut p = vec![q.powf(r)];
    for k in 0..kmax {
        let next = p[k] * (k as f64 + r) / (k as f64 + 1.0) * (1.0 - q);
        p.push(next);
    }
    p
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn ac1() -> Outcome {
    let m = ok(models::uniform_normal())?;
    let mut worst = 0.0f64;
    let mut worst_res = 0.0f64;
    for x in [0.5, 1.0, 1.5, 2.0] {
        let cond = ok(edf_conditional_average(&m, x))?.value;
        let marg = ok(edf(&m, x, None))?.value;
        worst = worst.max((cond - x).abs()).max((marg - x).abs());
        worst_res = worst_res.max(ok(edf_residual(&m, x))?.value.abs());
    }
    ensure!(worst < 1e-5, "EDF deviates from x by {worst:e}");
    ensure!(worst_res <= 1e-6, "residual {worst_res:e}");
    let probes = ok(probe_conditions(&m, &GridSpec::new(&[0.5, 1.0, 1.5, 2.0])))?;
    for name in [MEAN_HOMOGENEOUS, COVARIATE_FREE_OF_X] {
        ensure!(probes.status(name) == Some(ProbeStatus::Fail), "{name} is {:?}", probes.status(name));
    }
    Ok(format!("EDF = x within {worst:.1e}, residual {worst_res:.1e}, both sufficient conditions fail"))
}

fn ac2() -> Outcome {
    let m = ok(models::power_density(0.0, false))?;
    let grid = GridSpec::new(&[0.75, 1.0, 1.5]).with_y(&[0.02, 0.05]);
    let v = ok(check_average(MeasureKind::Mdi, &m, &grid))?;
    ensure!(v.classification.is_collapsible(), "MDI {:?}", v.classification);
    let mut worst = 0.0f64;
    for p in v.average_points() {
        let t = 1.0 / p.y.unwrap();
        let (c, g) = (p.conditional.ok_or("missing conditional")?.value, p.marginal.ok_or("missing marginal")?.value);
        worst = worst.max((c - t).abs()).max((g - t).abs());
    }
    ensure!(worst < 1e-3, "MDI deviates from 1/y by {worst:e}");
    let tail = |y: f64, x: f64| {
        let t2 = y.powf(-x) - x * x;
        if t2 <= 0.0 { 1.0 } else { libm_erfc(t2.sqrt() / std::f64::consts::SQRT_2) }
    };
    let mut checked = 0;
    let mut worst_f = 0.0f64;
    for (y, x) in [(0.02f64, 0.75f64), (0.05, 0.75), (0.02, 1.0), (0.05, 1.0), (0.02, 1.5), (0.05, 1.5)] {
        if tail(y, x) < 1e-4 {
            let closed = x * y.powf(x - 1.0) * (x * x + 1.0);
            worst_f = worst_f.max((ok(m.marginal_density(y, x))?.value - closed).abs());
            checked += 1;
        }
    }
    ensure!(checked > 0, "no safe point");
    ensure!(worst_f < 1e-4, "marginal density off by {worst_f:e}");
    let f = ok(m.marginal_density(0.05, 1.0))?.value;
    ensure!((f - 2.0).abs() < 1e-4, "f(0.05|1) = {f}");
    let probes = ok(probe_conditions(&m, &grid.clone().with_w(&[-1.0, 0.5, 1.0, 2.0])))?;
    ensure!(probes.passed(Y_SLOPE_MATCHES), "y-slope probe {:?}", probes.status(Y_SLOPE_MATCHES));
    ensure!(probes.status(Y_INDEP_W_GIVEN_X) == Some(ProbeStatus::Fail), "independence probe {:?}", probes.status(Y_INDEP_W_GIVEN_X));
    Ok(format!("MDI = 1/y within {worst:.1e}; density within {worst_f:.1e} at {checked} safe points; f(0.05|1) = {f:.6}"))
}

/// `erfc` via the complementary normal tail computed by quadrature.
fn libm_erfc(z: f64) -> f64 {
    let spec = QuadratureSpec { abs_tol: 1e-15, rel_tol: 1e-12, ..QuadratureSpec::default() };
    let upper = integrate(phi, Interval::new(z * std::f64::consts::SQRT_2, f64::INFINITY).unwrap(), &spec).unwrap().value;
    2.0 * upper
}

fn ac3() -> Outcome {
    let mut detail = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        let m = ok(models::power_density(lambda, false))?;
        let mut worst = 0.0f64;
        for (y, x) in [(0.05f64, 1.0f64), (0.02, 1.0), (0.02, 0.75), (0.05, 0.75)] {
            let t2 = y.powf(-x) - x * x;
            if t2 <= 0.0 || libm_erfc(t2.sqrt() / std::f64::consts::SQRT_2) >= 1e-4 {
                continue;
            }
            let closed = x * y.powf(x - 1.0) * (x * x + lambda * lambda + 1.0);
            worst = worst.max((ok(m.marginal_density(y, x))?.value - closed).abs());
        }
        ensure!(worst < 1e-4, "lambda {lambda}: deviation {worst:e}");
        if lambda == 1.0 {
            let f = ok(m.marginal_density(0.05, 1.0))?.value;
            ensure!((f - 3.0).abs() < 1e-4, "f_1(0.05|1) = {f}");
        }
        detail.push(format!("λ={lambda}: {worst:.1e}"));
    }
    Ok(detail.join(", "))
}

fn ac4() -> Outcome {
    let (alpha, beta) = (0.1, 0.3);
    let m = ok(models::poisson_gamma(alpha, beta))?;
    let mut worst = 0.0f64;
    for x in [1.0f64, 2.0] {
        let lambda = (alpha + beta * x).exp();
        let table = nb_pmf_table(x, x / (x + lambda), 50);
        for (k, p) in table.iter().enumerate() {
            worst = worst.max((ok(m.marginal_pmf(k as u64, x))?.value - p).abs());
        }
    }
    ensure!(worst < 1e-8, "pmf deviation {worst:e}");
    let v = ok(check_average(MeasureKind::Led, &m, &GridSpec::new(&[1.0, 2.0])))?;
    let mut worst_led = 0.0f64;
    for p in v.average_points() {
        worst_led = worst_led
            .max((p.conditional.ok_or("missing conditional")?.value - beta).abs())
            .max((p.marginal.ok_or("missing marginal")?.value - beta).abs());
    }
    ensure!(worst_led < 1e-6, "LED deviation {worst_led:e}");
    Ok(format!("pmf within {worst:.1e}, LED = β within {worst_led:.1e}"))
}

fn ac5() -> Outcome {
    let (alpha, beta, theta) = (0.1, 0.3, 2.0);
    let m = ok(models::nb_regression(alpha, beta, theta))?;
    let mut worst = 0.0f64;
    let mut worst_var = 0.0f64;
    for x in [0.0f64, 1.0] {
        let lambda = (alpha + beta * x).exp();
        let table = nb_pmf_table(theta, theta / (theta + lambda), 50);
        for (k, p) in table.iter().enumerate() {
            worst = worst.max((ok(m.marginal_pmf(k as u64, x))?.value - p).abs());
        }
        let moments = ok(m.marginal_count_moments(x))?;
        let var = lambda * (1.0 + lambda / theta);
        worst_var = worst_var.max((moments.variance - var).abs());
        ensure!(moments.variance > moments.mean, "variance {} does not exceed mean {}", moments.variance, moments.mean);
    }
    ensure!(worst < 1e-8, "pmf deviation {worst:e}");
    ensure!(worst_var < 1e-6, "variance deviation {worst_var:e}");
    Ok(format!("pmf within {worst:.1e}, variance identity within {worst_var:.1e}"))
}

fn ac6() -> Outcome {
    let m = ok(models::product_mean())?;
    let v = ok(check_average(MeasureKind::Edf, &m, &GridSpec::new(&[0.5, 1.0, 1.5, 2.0])))?;
    ensure!(v.classification == Classification::NotCollapsible, "{:?}", v.classification);
    let mut worst = 0.0f64;
    for p in v.average_points() {
        let gap = p.gap.ok_or("missing gap")?;
        worst = worst.max((gap - p.x).abs());
        ensure!((p.marginal.unwrap().value - 2.0 * p.x).abs() < 1e-5, "marginal at {}", p.x);
        ensure!((p.conditional.unwrap().value - p.x).abs() < 1e-5, "conditional at {}", p.x);
        let (miss, budget) = p.decomposition().ok_or("missing residual")?;
        ensure!(miss <= budget + 1e-12, "decomposition off by {miss:e} (budget {budget:e})");
    }
    ensure!(worst < 1e-5, "gap deviates from x by {worst:e}");
    let report = ok(scenarios::run("product_mean", &RunOptions::seeded(0)))?;
    ensure!(report.status == CheckStatus::Pass, "scenario {:?}", report.status);
    Ok(format!("NotCollapsible, gap = x within {worst:.1e}"))
}

fn ac7() -> Outcome {
    let spec = models::cochran_spec();
    let population = ok(models::linear_population(&spec))?;
    let rev = ok(detect_reversal(MeasureKind::Edf, &population, &GridSpec::new(&[-1.0, 0.0, 1.0]).with_w(&[-2.0, 0.0, 2.0])))?;
    ensure!(rev.reversal, "population reversal not flagged");
    let mut slopes = Vec::new();
    for seed in 0..5u64 {
        let d = ok(simulate(&spec, 100_000, &spec.x_law, Seed(seed)))?;
        let marginal = ok(fit_linear(&d, false))?;
        let conditional = ok(fit_linear(&d, true))?;
        let (bm, sm) = (marginal.coefficient("x").unwrap(), marginal.std_error("x").unwrap());
        let (bc, sc) = (conditional.coefficient("x").unwrap(), conditional.std_error("x").unwrap());
        ensure!((bm + 1.0).abs() <= 3.0 * sm, "seed {seed}: marginal slope {bm} (se {sm})");
        ensure!((bc - 1.0).abs() <= 3.0 * sc, "seed {seed}: conditional slope {bc} (se {sc})");
        let report = ok(scenarios::run("cochran_reversal", &RunOptions { n: Some(100_000), ..RunOptions::seeded(seed) }))?;
        ensure!(report.status == CheckStatus::Pass, "seed {seed}: scenario {:?}", report.status);
        ensure!(report.coefficient.as_ref().is_some_and(|c| c.reversal_flag), "seed {seed}: reversal flag unset");
        slopes.push(format!("{bm:.3}/{bc:.3}"));
    }
    Ok(format!("marginal/conditional slopes {}", slopes.join(" ")))
}

fn ac8() -> Outcome {
    let report = ok(scenarios::run("xwy_chain", &RunOptions::seeded(0)))?;
    let probes = report.probes.as_ref().ok_or("no probe report")?;
    let p = probes.get(X_INDEP_W_GIVEN_Y).ok_or("probe missing")?;
    ensure!(p.status == ProbeStatus::Pass, "probe {:?}", p.status);
    let dev = p.deviation.ok_or("no deviation")?;
    ensure!(dev < 1e-4, "deviation {dev:e}");
    let v = report.verdicts.iter().find(|v| v.measure == MeasureKind::Mdi).ok_or("no MDI verdict")?;
    ensure!(v.classification.is_collapsible(), "MDI {:?}", v.classification);
    let n = v.average_points().count();
    ensure!(n == 9 && v.grid.x_points.len() == 3 && v.grid.y_points.len() == 3, "grid has {n} points");
    ensure!(report.status == CheckStatus::Pass, "scenario {:?}", report.status);
    Ok(format!("X⊥W|Y deviation {dev:.1e}, MDI collapsible on 3×3"))
}

fn ac9() -> Outcome {
    let grid = SplitCovariateGrid::new(&[0.5, 1.0, 1.5]);
    let good = ok(models::bivariate_w(false))?;
    let v = ok(check_average_bivariate(MeasureKind::Edf, &good, &grid))?;
    ensure!(v.verdict.classification.is_collapsible(), "bivariate_w {:?}", v.verdict.classification);
    let mut worst = 0.0f64;
    for p in v.verdict.average_points() {
        worst = worst.max((p.conditional.unwrap().value - 1.0).abs()).max((p.marginal.unwrap().value - 1.0).abs());
    }
    ensure!(worst < 1e-5, "EDF deviates from 1 by {worst:e}");
    let broken = ok(models::bivariate_w(true))?;
    let b = ok(check_average_bivariate(MeasureKind::Edf, &broken, &grid))?;
    ensure!(b.verdict.classification == Classification::NotCollapsible, "broken {:?}", b.verdict.classification);
    let mut worst_gap = 0.0f64;
    for p in b.verdict.average_points() {
        worst_gap = worst_gap.max((p.gap.ok_or("missing gap")? - 1.0).abs());
    }
    ensure!(worst_gap < 1e-4, "gap deviates from 1 by {worst_gap:e}");
    for name in ["bivariate_w", "bivariate_w_broken"] {
        let r = ok(scenarios::run(name, &RunOptions::seeded(0)))?;
        ensure!(r.status == CheckStatus::Pass, "{name} scenario {:?}", r.status);
    }
    Ok(format!("EDF = 1 within {worst:.1e}; broken gap = 1 within {worst_gap:.1e}"))
}

fn ac10() -> Outcome {
    let n = 20_000;
    let poisson = RegressionSpec::standard(RegressionFamily::Poisson, 0.0, 2.0);
    let v = ok(check_beta_collapsibility(&poisson, n, Seed(0), &[-1.0, 0.0, 1.0]))?;
    ensure!(v.classification.is_collapsible(), "Poisson {:?}, max gap {}", v.classification, v.max_gap);
    ensure!(v.max_score_norm < 1e-6 * n as f64, "score {}", v.max_score_norm);
    ensure!(v.marginal_fit.converged && v.conditional_fit.as_ref().is_some_and(|f| f.converged), "Poisson fits did not converge");
    let half: XFn = Arc::new(|_| Ok(0.5));
    let discrete = RegressionSpec::new(
        RegressionFamily::Linear,
        Coefficients::Stratified { levels: vec![0.0, 1.0], alpha: vec![0.0, 1.0], beta: vec![0.4, 0.4] },
        ok(CovariateLaw::discrete(vec![0.0, 1.0], vec![half.clone(), half]))?,
    );
    let d = ok(check_beta_collapsibility(&discrete, n, Seed(0), &[-1.0, 0.0, 1.0]))?;
    ensure!(d.classification.is_collapsible(), "discrete {:?}", d.classification);
    ensure!(d.max_score_norm < 1e-6 * n as f64, "score {}", d.max_score_norm);
    ensure!(d.strata.iter().all(|s| s.fit.converged) && d.marginal_fit.converged, "stratum fit did not converge");
    let b = d.marginal_fit.coefficient("x").unwrap();
    Ok(format!("Poisson gap {:.1e}; discrete β̃ = {b:.4}; max score {:.1e}", v.max_gap, v.max_score_norm.max(d.max_score_norm)))
}

fn ac11() -> Outcome {
    let spec = QuadratureSpec { abs_tol: 1e-13, rel_tol: 1e-12, ..QuadratureSpec::default() };
    for f in [Family::Normal { mean: 0.3, sd: 1.7 }, Family::Gamma { rate: 2.0, shape: 3.0 }, Family::Uniform { lo: -1.0, hi: 2.0 }] {
        let mass = ok(integrate(|t| f.pdf(t), f.support(), &spec))?.value;
        ensure!((mass - 1.0).abs() < 1e-8, "{f:?} mass {mass}");
    }
    for k in [1, 3, 5] {
        let v = ok(integrate(|t: f64| t.powi(k) * phi(t), Interval::real_line(), &spec))?.value;
        ensure!(v.abs() < 1e-9, "odd moment {k}: {v:e}");
    }
    for x in [-1.5, 0.25, 2.0] {
        let d = ok(differentiate(|t| 2.0 * t * t * t - t * t + 4.0 * t - 1.0, x, &DiffSpec::default()))?.value;
        let truth = 6.0 * x * x - 2.0 * x + 4.0;
        ensure!((d - truth).abs() < 1e-8, "derivative at {x}: {d} vs {truth}");
    }
    let pg = ok(models::poisson_gamma(0.1, 0.3))?;
    for x in [0.5, 1.0, 1.5, 2.0] {
        ensure!(ok(led(&pg, x, None))?.value > 1e-6, "LED not positive at {x}");
        ensure!(ok(edf(&pg, x, None))?.value >= 0.0, "EDF negative at {x}");
    }
    let rho = ok(correlation_mc(&pg, &ok(Family::new(FamilyTag::Uniform, &[0.5, 2.0]))?, 4000, Seed(5)))?;
    ensure!(rho.rho > -3.0 * rho.std_error, "correlation {} (se {})", rho.rho, rho.std_error);
    for name in SCENARIO_NAMES {
        let r = ok(scenarios::run(name, &RunOptions::seeded(0)))?;
        let c = r.check(IMPLICATION_CHECK).ok_or(format!("{name}: no implication check"))?;
        ensure!(c.status == CheckStatus::Pass, "{name}: {}", c.observed);
    }
    let dir = ok(tempfile::tempdir())?;
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("run{i}.json"));
        let argv = ["collapse", "scenarios", "run", "cochran_reversal", "--seed", "3", "--n", "20000", "--json", path.to_str().unwrap()];
        let code = collapse_cli::run(argv, &mut std::io::sink(), &mut std::io::sink());
        ensure!(code == 0, "run {i} exited {code}");
        bytes.push(ok(std::fs::read(&path))?);
    }
    ensure!(bytes[0] == bytes[1], "reports differ");
    Ok(format!("quadrature, derivative, sign chain (ρ = {:.3}), implication sweep over {} scenarios, byte-identical reports", rho.rho, SCENARIO_NAMES.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("AC-1", "uniform-normal cancellation", ac1),
        ("AC-2", "power density MDI and marginal density", ac2),
        ("AC-3", "tempered family marginal density", ac3),
        ("AC-4", "Poisson-gamma mixture identity", ac4),
        ("AC-5", "negative binomial mixture and overdispersion", ac5),
        ("AC-6", "product-mean negative control", ac6),
        ("AC-7", "confounding reversal across seeds", ac7),
        ("AC-8", "chain model X independent of W given Y", ac8),
        ("AC-9", "bivariate covariate", ac9),
        ("AC-10", "regression coefficient collapsibility", ac10),
        ("AC-11", "property suites and determinism", ac11),
    ];
    let mut failed = 0;
    for (id, title, f) in criteria {
        let started = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {why} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
