use collapse_core::model::NumericSettings;
use collapse_core::numerics::QuadratureSpec;
use collapse_core::scenarios::{run, CheckStatus, RunOptions};

#[test]
fn cochran_reversal_holds_across_seeds() {
    for seed in [0, 1, 2] {
        let opts = RunOptions { n: Some(20_000), ..RunOptions::seeded(seed) };
        let report = run("cochran_reversal", &opts).unwrap();
        assert_eq!(report.status, CheckStatus::Pass, "seed {seed}: {:#?}", report.checks);
    }
}

fn hermite() -> NumericSettings {
    NumericSettings { quadrature: QuadratureSpec::gauss_hermite(), ..NumericSettings::default() }
}

#[test]
fn normal_covariate_scenarios_pass_under_both_quadratures() {
    for name in ["uniform_normal", "product_mean", "cochran_reversal"] {
        let base = RunOptions { n: Some(20_000), ..RunOptions::seeded(0) };
        let adaptive = run(name, &base).unwrap();
        let gh = run(name, &RunOptions { settings: Some(hermite()), ..base }).unwrap();
        assert_eq!(adaptive.status, CheckStatus::Pass, "{name} adaptive");
        assert_eq!(gh.status, CheckStatus::Pass, "{name} hermite: {:#?}", gh.checks);
        assert_eq!(adaptive.checks.len(), gh.checks.len());
        for (a, g) in adaptive.checks.iter().zip(&gh.checks) {
            assert_eq!(a.check, g.check);
            if let (Some(x), Some(y)) = (a.gap, g.gap) {
                assert!((x - y).abs() <= 1e-5 + 0.01 * x.abs().max(y.abs()), "{name} {}: {x} vs {y}", a.check);
            }
        }
    }
}
