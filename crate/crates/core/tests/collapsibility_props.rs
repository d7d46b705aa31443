use collapse_core::collapsibility::{check_average, detect_reversal, edf_residual, probe_conditions, GridSpec};
use collapse_core::distributions::{Family, FamilyTag};
use collapse_core::measures::MeasureKind;
use collapse_core::model::{ConditionalModel, CovariateLaw, ResponseLaw};
use collapse_core::scenarios::{self, models, CheckStatus, RunOptions, IMPLICATION_CHECK, SCENARIO_NAMES};
use proptest::prelude::*;

const XS: [f64; 4] = [0.75, 1.0, 1.25, 1.5];

/// Models with a finite conditional mean.
fn catalog() -> Vec<ConditionalModel> {
    vec![
        models::uniform_normal().unwrap(),
        models::homogeneous_uniform().unwrap(),
        models::homogeneous_gamma().unwrap(),
        models::power_density(0.0, true).unwrap(),
        models::poisson_gamma(0.1, 0.3).unwrap(),
        models::nb_regression(0.1, 0.3, 2.0).unwrap(),
        models::product_mean().unwrap(),
        models::linear_population(&models::cochran_spec()).unwrap(),
    ]
}

/// `E(Y|x,w) = a + b x + c w x`, `W | x ~ N(s x, 1)`.
fn interaction(a: f64, b: f64, c: f64, s: f64) -> ConditionalModel {
    ConditionalModel::builder("interaction")
        .covariate(CovariateLaw::family(move |x| Family::normal(s * x, 1.0)))
        .response(ResponseLaw::from_family(FamilyTag::Normal, move |x, w| Family::normal(a + b * x + c * w * x, 1.0)))
        .build()
        .unwrap()
}

#[test]
fn residual_and_gap_are_equivalent() {
    for m in catalog() {
        let grid = GridSpec::new(&XS);
        let verdict = check_average(MeasureKind::Edf, &m, &grid).unwrap();
        for p in verdict.average_points() {
            let (Some(gap), Some(tol), Some(r)) = (p.gap, p.tolerance, p.residual) else {
                panic!("{}: incomplete point at x={}: {:?}", m.name, p.x, p.error);
            };
            let (miss, errs) = p.decomposition().unwrap();
            assert!(miss <= errs + 1e-12, "{}: decomposition off by {miss} at x={}", m.name, p.x);
            let slack = tol + errs + r.err_estimate;
            if r.value.abs() <= tol {
                assert!(gap <= slack, "{}: small residual, gap {gap} at x={}", m.name, p.x);
            }
            if gap <= tol {
                assert!(r.value.abs() <= slack, "{}: small gap, residual {} at x={}", m.name, r.value, p.x);
            }
            let direct = edf_residual(&m, p.x).unwrap();
            assert!((direct.value - r.value).abs() <= direct.err_estimate + r.err_estimate + 1e-12);
        }
    }
}

#[test]
fn reversal_never_accompanies_collapsibility() {
    for m in catalog() {
        let grid = GridSpec::new(&XS);
        let verdict = check_average(MeasureKind::Edf, &m, &grid).unwrap();
        if verdict.classification.is_collapsible() {
            assert!(!detect_reversal(MeasureKind::Edf, &m, &grid).unwrap().reversal, "{}", m.name);
        }
    }
}

#[test]
fn passing_probes_imply_collapsibility() {
    let mut implied = 0;
    for m in catalog() {
        let grid = GridSpec::new(&XS);
        let probes = probe_conditions(&m, &grid).unwrap();
        for measure in [MeasureKind::Edf, MeasureKind::Led] {
            let passing = probes.passing_for(measure);
            if passing.is_empty() {
                continue;
            }
            implied += 1;
            let verdict = check_average(measure, &m, &grid).unwrap();
            assert!(verdict.classification.is_collapsible(), "{} {}: {passing:?} pass but {:?}", m.name, measure.name(), verdict.classification);
        }
    }
    assert!(implied >= 3, "only {implied} implications exercised");
}

#[test]
fn catalog_never_contradicts_its_probes() {
    for name in SCENARIO_NAMES {
        let report = scenarios::run(name, &RunOptions::seeded(0)).unwrap();
        let check = report.check(IMPLICATION_CHECK).unwrap_or_else(|| panic!("{name}: no implication check"));
        assert_eq!(check.status, CheckStatus::Pass, "{name}: {}", check.observed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loosening_tolerance_keeps_collapsibility(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.05f64..0.05, s in -1.0f64..1.0,
        t1 in 1e-6f64..0.2, factor in 1.0f64..10.0,
    ) {
        let m = interaction(a, b, c, s);
        let tight = check_average(MeasureKind::Edf, &m, &GridSpec::new(&XS).with_tolerances(t1, 1e-6)).unwrap();
        let loose = check_average(MeasureKind::Edf, &m, &GridSpec::new(&XS).with_tolerances(t1 * factor, 1e-6)).unwrap();
        if tight.classification.is_collapsible() {
            prop_assert!(loose.classification.is_collapsible());
        }
        prop_assert!(loose.max_average_gap == tight.max_average_gap);
    }

    #[test]
    fn collapsible_interactions_never_reverse(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.5f64..0.5, s in -1.0f64..1.0) {
        let m = interaction(a, b, c, s);
        let grid = GridSpec::new(&XS);
        let verdict = check_average(MeasureKind::Edf, &m, &grid).unwrap();
        if verdict.classification.is_collapsible() {
            prop_assert!(!detect_reversal(MeasureKind::Edf, &m, &grid).unwrap().reversal);
        }
    }
}
