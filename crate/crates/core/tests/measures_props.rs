use collapse_core::distributions::{Family, FamilyTag, Seed};
use collapse_core::measures::{correlation_mc, edf, led, mdi};
use collapse_core::model::{ConditionalModel, CovariateLaw, ResponseLaw};
use collapse_core::scenarios::models;
use proptest::prelude::*;

const X_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

fn log_linear(a: f64, b: f64, c: f64, shift: f64) -> ConditionalModel {
    ConditionalModel::builder("log_linear")
        .covariate(CovariateLaw::family(move |x| Family::normal(shift * x, 1.0)))
        .response(ResponseLaw::from_family(FamilyTag::Normal, move |x, w| {
            Family::normal((a + b * x + c * w).exp(), 1.0)
        }))
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn led_is_edf_over_mean(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.8f64..0.8, shift in -1.0f64..1.0, x in -1.0f64..1.0) {
        let m = log_linear(a, b, c, shift);
        let mean = m.marginal_mean(x).unwrap();
        prop_assume!(mean.value > 0.1);
        let l = led(&m, x, None).unwrap();
        let e = edf(&m, x, None).unwrap();
        let ratio = e.value / mean.value;
        let tol = l.err_estimate + (e.err_estimate + ratio.abs() * mean.err_estimate) / mean.value + 1e-7 * (1.0 + ratio.abs());
        prop_assert!((l.value - ratio).abs() <= tol, "{} vs {} (tol {})", l.value, ratio, tol);
    }

    #[test]
    fn power_density_mdi_is_free_of_w(y in 0.05f64..0.5, w in 0.5f64..1.5) {
        let m = models::power_density(0.0, false).unwrap();
        let v = mdi(&m, y, 1.0, Some(w)).unwrap();
        prop_assert!((v.value - 1.0 / y).abs() < 1e-5 * (1.0 + 1.0 / y), "{} vs {}", v.value, 1.0 / y);
    }
}

#[test]
fn sign_chain_on_positive_led_models() {
    let candidates = vec![
        models::uniform_normal().unwrap(),
        models::homogeneous_gamma().unwrap(),
        models::poisson_gamma(0.1, 0.3).unwrap(),
        models::nb_regression(0.1, 0.3, 2.0).unwrap(),
        models::product_mean().unwrap(),
        models::linear_population(&models::cochran_spec()).unwrap(),
    ];
    let tol = 1e-6;
    let mut exercised = 0;
    for m in candidates {
        let leds: Vec<f64> = X_GRID.iter().map(|&x| led(&m, x, None).map(|v| v.value).unwrap_or(f64::NAN)).collect();
        if !leds.iter().all(|&v| v >= tol) {
            continue;
        }
        exercised += 1;
        for &x in &X_GRID {
            let e = edf(&m, x, None).unwrap();
            assert!(e.value >= -e.err_estimate, "{}: edf {} at {x}", m.name, e.value);
        }
        if m.capabilities().sampler {
            let law = Family::new(FamilyTag::Uniform, &[0.5, 2.0]).unwrap();
            let rho = correlation_mc(&m, &law, 4000, Seed(11)).unwrap();
            assert!(rho.rho > -3.0 * rho.std_error, "{}: rho {} se {}", m.name, rho.rho, rho.std_error);
        }
    }
    assert!(exercised >= 3, "only {exercised} models had positive LED");
}
