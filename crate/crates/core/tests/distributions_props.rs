use collapse_core::distributions::{sample, Family, Seed};
use collapse_core::numerics::{integrate, Interval, QuadratureSpec};
use proptest::prelude::*;

fn spec() -> QuadratureSpec {
    QuadratureSpec { abs_tol: 1e-13, rel_tol: 1e-12, ..QuadratureSpec::default() }
}

fn continuous() -> impl Strategy<Value = Family> {
    prop_oneof![
        (-3.0f64..3.0, 0.2f64..3.0).prop_map(|(mean, sd)| Family::Normal { mean, sd }),
        (-3.0f64..0.0, 0.5f64..4.0).prop_map(|(lo, w)| Family::Uniform { lo, hi: lo + w }),
        (0.3f64..4.0, 1.0f64..6.0).prop_map(|(rate, shape)| Family::Gamma { rate, shape }),
        (-2.0f64..2.0, 0.0f64..2.0).prop_map(|(center, lambda)| Family::TemperedNormal { center, lambda }),
    ]
}

fn discrete() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.1f64..8.0).prop_map(|mean| Family::Poisson { mean }),
        (0.5f64..5.0, 0.2f64..0.9).prop_map(|(size, prob)| Family::NegativeBinomial { size, prob }),
        (0.01f64..0.99).prop_map(|p| Family::Bernoulli { p }),
    ]
}

fn series(f: &Family) -> (f64, f64, f64) {
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..5000 {
        let p = f.pdf(k as f64);
        mass += p;
        m1 += k as f64 * p;
        m2 += (k * k) as f64 * p;
    }
    (mass, m1, m2 - m1 * m1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn densities_normalize_and_mean_matches(f in continuous()) {
        let sup = f.support();
        let mass = integrate(|t| f.pdf(t), sup, &spec()).unwrap();
        prop_assert!((mass.value - 1.0).abs() < 1e-8, "{f:?}: mass {}", mass.value);
        let mean = integrate(|t| t * f.pdf(t), sup, &spec()).unwrap();
        prop_assert!((mean.value - f.mean()).abs() < 1e-6, "{f:?}: mean {}", mean.value);
    }

    #[test]
    fn series_moments_match(f in discrete()) {
        let (mass, mean, var) = series(&f);
        prop_assert!((mass - 1.0).abs() < 1e-10);
        prop_assert!((mean - f.mean()).abs() < 1e-6);
        prop_assert!((var - f.variance()).abs() < 1e-6);
    }

    #[test]
    fn nb_variance_identity(theta in 0.5f64..6.0, lambda in 0.1f64..6.0) {
        let f = Family::NegativeBinomial { size: theta, prob: theta / (theta + lambda) };
        let (_, mean, var) = series(&f);
        prop_assert!((mean - lambda).abs() < 1e-6);
        prop_assert!((var - lambda * (1.0 + lambda / theta)).abs() < 1e-6);
        prop_assert!(var > mean);
    }

    #[test]
    fn cdf_is_monotone(f in prop_oneof![continuous(), discrete()], a in -10.0f64..10.0, d in 0.0f64..10.0) {
        prop_assert!(f.cdf(a + d) >= f.cdf(a));
    }

    #[test]
    fn sampling_is_reproducible(f in prop_oneof![continuous(), discrete()], seed in any::<u64>()) {
        let a = sample(&f, 64, Seed(seed)).unwrap();
        let b = sample(&f, 64, Seed(seed)).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn support_of_uniform_is_bounded() {
    assert_eq!(Family::Uniform { lo: 1.0, hi: 2.0 }.support(), Interval::new(1.0, 2.0).unwrap());
}
