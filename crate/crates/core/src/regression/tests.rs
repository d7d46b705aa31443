use alloc::sync::Arc;

use super::*;
use crate::distributions::special::ln_gamma;
use crate::model::XFn;

fn half(_: f64) -> Result<f64> {
    Ok(0.5)
}

fn cochran() -> RegressionSpec {
    RegressionSpec::new(
        RegressionFamily::Linear,
        Coefficients::Common { alpha: 0.0, beta: 1.0, gamma: -1.0 },
        CovariateLaw::family(|x| Ok(Family::Normal { mean: 2.0 * x, sd: 1.0 })),
    )
}

fn homogeneous_discrete() -> RegressionSpec {
    let probs: Vec<XFn> = vec![Arc::new(half), Arc::new(half)];
    RegressionSpec::new(
        RegressionFamily::Linear,
        Coefficients::Stratified { levels: vec![0.0, 1.0], alpha: vec![0.0, 1.0], beta: vec![0.4, 0.4] },
        CovariateLaw::discrete(vec![0.0, 1.0], probs).unwrap(),
    )
}

fn within_3se(fit: &FitResult, name: &str, truth: f64) -> bool {
    (fit.coefficient(name).unwrap() - truth).abs() <= 3.0 * fit.std_error(name).unwrap()
}

#[test]
fn family_names() {
    for f in RegressionFamily::ALL {
        assert_eq!(RegressionFamily::from_name(f.name()), Some(f));
    }
    assert_eq!(RegressionFamily::from_name("NegBin"), Some(RegressionFamily::NegBin));
    assert_eq!(RegressionFamily::from_name("probit"), None);
}

#[test]
fn noiseless_linear_records_follow_the_predictor() {
    let spec = RegressionSpec::standard(RegressionFamily::Linear, 0.7, 2.0).with_noise_sd(1e-9);
    let d = simulate(&spec, 500, &spec.x_law, Seed(4)).unwrap();
    for i in 0..d.len() {
        assert!((d.y[i] - (0.1 + 0.3 * d.x[i] + 0.7 * d.w[i])).abs() < 1e-6);
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let spec = RegressionSpec::standard(RegressionFamily::Poisson, 0.2, 2.0);
    let a = simulate(&spec, 200, &spec.x_law, Seed(9)).unwrap();
    let b = simulate(&spec, 200, &spec.x_law, Seed(9)).unwrap();
    let c = simulate(&spec, 200, &spec.x_law, Seed(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.y, c.y);
}

#[test]
fn invalid_specs_rejected() {
    assert!(RegressionSpec::standard(RegressionFamily::Linear, 0.0, 2.0).with_noise_sd(0.0).validate().is_err());
    assert!(RegressionSpec::standard(RegressionFamily::NegBin, 0.0, -1.0).validate().is_err());
    let bad: Vec<XFn> = vec![Arc::new(half), Arc::new(|_| Ok(0.6))];
    let spec = RegressionSpec::new(
        RegressionFamily::Linear,
        Coefficients::Common { alpha: 0.0, beta: 1.0, gamma: 0.0 },
        CovariateLaw::discrete(vec![0.0, 1.0], bad).unwrap(),
    );
    assert!(spec.validate().is_err());
    assert!(simulate(&homogeneous_discrete(), 0, &Family::Normal { mean: 0.0, sd: 1.0 }, Seed(0)).is_err());
}

#[test]
fn exact_linear_data_recovered() {
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
    let w: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
    let y: Vec<f64> = x.iter().zip(&w).map(|(x, w)| 1.0 + 2.0 * x + 3.0 * w).collect();
    let d = Dataset::new(y, x, w, Provenance { family: None, seed: None, n: 20, description: "exact".into() }).unwrap();
    let fit = fit_linear(&d, true).unwrap();
    for (c, t) in fit.coefficients.iter().zip([1.0, 2.0, 3.0]) {
        assert!((c - t).abs() < 1e-8);
    }
}

#[test]
fn collinear_design_is_rank_deficient() {
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let w: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let d = Dataset::new(x.clone(), x, w, Provenance { family: None, seed: None, n: 10, description: "c".into() }).unwrap();
    assert_eq!(fit_linear(&d, true).unwrap_err(), Error::RankDeficient);
}

#[test]
fn residuals_orthogonal_to_design() {
    let spec = cochran();
    let d = simulate(&spec, 5000, &spec.x_law, Seed(1)).unwrap();
    for include_w in [false, true] {
        let fit = fit_linear(&d, include_w).unwrap();
        let resid: Vec<f64> = (0..d.len())
            .map(|i| {
                let mut e = d.y[i] - fit.coefficients[0] - fit.coefficients[1] * d.x[i];
                if include_w {
                    e -= fit.coefficients[2] * d.w[i];
                }
                e
            })
            .collect();
        let cols: [&[f64]; 2] = [&d.x, &d.w];
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        assert!(cols[0].iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>().abs() < 1e-8);
        if include_w {
            assert!(cols[1].iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>().abs() < 1e-8);
        }
    }
}

#[test]
fn cochran_marginal_slope_matches_omitted_variable_formula() {
    let spec = cochran();
    let d = simulate(&spec, 100_000, &spec.x_law, Seed(2)).unwrap();
    let fit = fit_linear(&d, false).unwrap();
    // β + γ Cov(W, X) / Var(X) with Cov = 2, Var = 1.
    assert!(within_3se(&fit, "x", 1.0 - 2.0), "{:?}", fit.coefficients);
    let cond = fit_linear(&d, true).unwrap();
    assert!(within_3se(&cond, "x", 1.0));
    assert!(within_3se(&cond, "w", -1.0));
}

#[test]
fn poisson_fits_recover_coefficients() {
    let spec = RegressionSpec::standard(RegressionFamily::Poisson, 0.0, 2.0);
    let d = simulate(&spec, 20_000, &spec.x_law, Seed(3)).unwrap();
    let m = fit_glm(&d, RegressionFamily::Poisson, false).unwrap();
    assert!(m.converged);
    assert!(within_3se(&m, "x", 0.3));
    assert!(m.score_norm < 1e-6 * d.len() as f64);

    let spec = RegressionSpec::standard(RegressionFamily::Poisson, 0.2, 2.0);
    let d = simulate(&spec, 20_000, &spec.x_law, Seed(5)).unwrap();
    let c = fit_glm(&d, RegressionFamily::Poisson, true).unwrap();
    assert!(within_3se(&c, "intercept", 0.1));
    assert!(within_3se(&c, "x", 0.3));
    assert!(within_3se(&c, "w", 0.2));
}

#[test]
fn logistic_fit_and_separation() {
    let spec = RegressionSpec::standard(RegressionFamily::Logistic, 0.5, 2.0);
    let d = simulate(&spec, 20_000, &spec.x_law, Seed(6)).unwrap();
    let c = fit_glm(&d, RegressionFamily::Logistic, true).unwrap();
    assert!(within_3se(&c, "x", 0.3) && within_3se(&c, "w", 0.5));
    assert!(c.score_norm < 1e-6 * d.len() as f64);

    let x = vec![-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0];
    let y = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    let d = Dataset::new(y, x, vec![0.0; 8], Provenance { family: None, seed: None, n: 8, description: "sep".into() }).unwrap();
    assert_eq!(fit_glm(&d, RegressionFamily::Logistic, false).unwrap_err(), Error::Separation);
}

#[test]
fn glm_rejects_bad_responses() {
    let d = Dataset::new(vec![0.5, 1.0, 0.0], vec![0.0, 1.0, 2.0], vec![0.0; 3], Provenance { family: None, seed: None, n: 3, description: "b".into() }).unwrap();
    assert!(fit_glm(&d, RegressionFamily::Logistic, false).is_err());
    assert!(fit_glm(&d, RegressionFamily::Poisson, false).is_err());
    assert!(fit_glm(&d, RegressionFamily::Linear, false).is_err());
}

fn nb_pmf(k: u64, size: f64, prob: f64) -> f64 {
    let k = k as f64;
    (ln_gamma(k + size) - ln_gamma(size) - ln_gamma(k + 1.0) + size * prob.ln() + k * (1.0 - prob).ln()).exp()
}

#[test]
fn negbin_frailty_mixture_matches_nb_frequencies() {
    let spec = RegressionSpec::standard(RegressionFamily::NegBin, 0.0, 2.0)
        .with_x_law(Family::Uniform { lo: 0.0, hi: 1e-12 });
    let n = 100_000;
    let d = simulate(&spec, n, &spec.x_law, Seed(7)).unwrap();
    let lambda = 0.1f64.exp();
    let prob = 2.0 / (2.0 + lambda);
    let mut worst = 0.0f64;
    for k in 0..12u64 {
        let freq = d.y.iter().filter(|y| **y == k as f64).count() as f64 / n as f64;
        let p = nb_pmf(k, 2.0, prob);
        let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
        worst = worst.max((freq - p).abs() / band);
    }
    assert!(worst < 1.0, "sup gap {worst} bands");
}

#[test]
fn negbin_fits() {
    let spec = RegressionSpec::standard(RegressionFamily::NegBin, 0.0, 2.0);
    let d = simulate(&spec, 50_000, &spec.x_law, Seed(8)).unwrap();
    let known = fit_negbin(&d, Theta::Known(2.0)).unwrap();
    assert!(within_3se(&known, "x", 0.3));
    assert!(known.score_norm < 1e-6 * d.len() as f64);
    let moment = fit_negbin(&d, Theta::Moment).unwrap();
    let th = moment.theta.unwrap();
    assert!((th - 2.0).abs() < 0.3 * 2.0, "theta {th}");
    assert!(moment.warnings.is_empty());
    // Implied variance exceeds the mean.
    let mu = (known.coefficients[0] + known.coefficients[1] * 0.5).exp();
    assert!(mu * (1.0 + mu / 2.0) > mu);

    let pois = RegressionSpec::standard(RegressionFamily::Poisson, 0.0, 2.0);
    let d = simulate(&pois, 50_000, &pois.x_law, Seed(8)).unwrap();
    match fit_negbin(&d, Theta::Moment) {
        Err(Error::Underdispersed { excess }) => assert!(excess <= 0.0),
        Ok(fit) => assert!(!fit.warnings.is_empty(), "theta {:?}", fit.theta),
        Err(e) => panic!("{e:?}"),
    }
}

#[test]
fn discrete_homogeneous_slopes_collapsible() {
    let v = check_beta_collapsibility(&homogeneous_discrete(), 20_000, Seed(11), &[-1.0, 0.0, 1.0]).unwrap();
    assert_eq!(v.classification, Classification::AverageCollapsible);
    assert_eq!(v.strata.len(), 2);
    assert!((v.marginal_fit.coefficient("x").unwrap() - 0.4).abs() < 0.05);
    assert!(!v.reversal_flag);
}

#[test]
fn cochran_not_collapsible_with_reversal() {
    let v = check_beta_collapsibility(&cochran(), 100_000, Seed(12), &[0.0]).unwrap();
    assert_eq!(v.classification, Classification::NotCollapsible);
    assert!((v.max_gap - 2.0).abs() < 0.05, "{}", v.max_gap);
    assert!(v.reversal_flag);
}

#[test]
fn poisson_without_covariate_effect_collapsible() {
    let spec = RegressionSpec::standard(RegressionFamily::Poisson, 0.0, 2.0);
    let v = check_beta_collapsibility(&spec, 20_000, Seed(13), &[-1.0, 0.0, 1.0]).unwrap();
    assert_eq!(v.classification, Classification::AverageCollapsible);
    assert!(v.max_score_norm < 1e-6 * 20_000.0);
}

#[test]
fn small_strata_rejected() {
    assert!(check_beta_collapsibility(&homogeneous_discrete(), 60, Seed(1), &[0.0]).is_err());
    assert!(check_beta_collapsibility(&homogeneous_discrete(), 1000, Seed(1), &[]).is_err());
}

#[test]
fn empirical_weights_track_declared_probabilities() {
    let spec = homogeneous_discrete();
    let d = simulate(&spec, 20_000, &spec.x_law, Seed(14)).unwrap();
    let w = empirical_stratum_weights(&d, &[0.0, 1.0], 0.0).unwrap();
    assert!((w[0] - 0.5).abs() < 0.03 && (w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
