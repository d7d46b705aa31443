//! Globally adaptive 21-point Gauss-Kronrod quadrature.

use super::{EstimatedReal, Interval, QuadratureSpec};
use crate::prelude::*;
use crate::{Error, Result};

// Kronrod abscissae on [-1, 1], largest first; odd indices are the
// 10-point Gauss abscissae.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_393_958,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Placement hints for the domain transform and the initial partition.
///
/// `center` and `scale` position the map of an infinite domain so that the
/// bulk of the integrand lands in the middle of the transformed interval;
/// `breaks` are points (kinks, support edges) that become initial cut points.
#[derive(Clone, Debug, Default)]
pub struct Hint {
    pub center: Option<f64>,
    pub scale: Option<f64>,
    pub breaks: Vec<f64>,
}

impl Hint {
    pub fn centered(center: f64, scale: f64) -> Self {
        Self {
            center: Some(center),
            scale: Some(scale),
            breaks: Vec::new(),
        }
    }

    pub fn with_breaks(mut self, breaks: &[f64]) -> Self {
        self.breaks.extend_from_slice(breaks);
        self
    }
}

#[derive(Clone, Copy, Debug)]
enum Map {
    Identity,
    /// `t = c + s * u / (1 - u^2)` on (-1, 1).
    Line { c: f64, s: f64 },
    /// `t = a + s * u / (1 - u)` on [0, 1).
    Upper { a: f64, s: f64 },
    /// `t = b - s * u / (1 - u)` on [0, 1), orientation reversed.
    Lower { b: f64, s: f64 },
}

impl Map {
    fn for_domain(domain: Interval, hint: &Hint) -> Self {
        let s = hint
            .scale
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or(1.0);
        match (domain.lower().is_finite(), domain.upper().is_finite()) {
            (true, true) => Map::Identity,
            (false, false) => Map::Line {
                c: hint.center.filter(|c| c.is_finite()).unwrap_or(0.0),
                s,
            },
            (true, false) => Map::Upper {
                a: domain.lower(),
                s,
            },
            (false, true) => Map::Lower {
                b: domain.upper(),
                s,
            },
        }
    }

    fn u_bounds(&self, domain: Interval) -> (f64, f64) {
        match self {
            Map::Identity => (domain.lower(), domain.upper()),
            Map::Line { .. } => (-1.0, 1.0),
            Map::Upper { .. } | Map::Lower { .. } => (0.0, 1.0),
        }
    }

    /// Returns `(t, dt/du)`.
    #[inline]
    fn point(&self, u: f64) -> (f64, f64) {
        match *self {
            Map::Identity => (u, 1.0),
            Map::Line { c, s } => {
                let d = 1.0 - u * u;
                (c + s * u / d, s * (1.0 + u * u) / (d * d))
            }
            Map::Upper { a, s } => {
                let d = 1.0 - u;
                (a + s * u / d, s / (d * d))
            }
            Map::Lower { b, s } => {
                let d = 1.0 - u;
                (b - s * u / d, s / (d * d))
            }
        }
    }

    fn inverse(&self, t: f64) -> f64 {
        match *self {
            Map::Identity => t,
            Map::Line { c, s } => {
                let tau = (t - c) / s;
                if tau == 0.0 {
                    0.0
                } else {
                    2.0 * tau / (1.0 + (1.0 + 4.0 * tau * tau).sqrt())
                }
            }
            Map::Upper { a, s } => {
                let tau = (t - a) / s;
                tau / (1.0 + tau)
            }
            Map::Lower { b, s } => {
                let tau = (b - t) / s;
                tau / (1.0 + tau)
            }
        }
    }

    fn seed_cuts(&self) -> &'static [f64] {
        match self {
            Map::Identity => &[],
            Map::Line { .. } => &[-0.5, 0.0, 0.5],
            Map::Upper { .. } | Map::Lower { .. } => &[0.5],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn kronrod<F>(f: &mut F, map: &Map, a: f64, b: f64, evals: &mut usize) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |u: f64| -> Result<f64> {
        let (t, jac) = map.point(u);
        let v = f(t)?;
        *evals += 1;
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { at: t });
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let g = v * jac;
        if !g.is_finite() {
            return Err(Error::NonFiniteEvaluation { at: t });
        }
        Ok(g)
    };

    let fc = eval(center)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment { a, b, value, err })
}

/// Integrates `f` over `domain` by adaptive subdivision.
pub fn integrate<F>(f: F, domain: Interval, spec: &QuadratureSpec) -> Result<EstimatedReal>
where
    F: Fn(f64) -> f64,
{
    try_integrate_with(|t| Ok(f(t)), domain, &Hint::default(), spec)
}

/// Fallible integrand variant of [`integrate`]; the first integrand error
/// aborts the integration and is returned unchanged.
pub fn try_integrate<F>(f: F, domain: Interval, spec: &QuadratureSpec) -> Result<EstimatedReal>
where
    F: FnMut(f64) -> Result<f64>,
{
    try_integrate_with(f, domain, &Hint::default(), spec)
}

pub fn try_integrate_with<F>(
    mut f: F,
    domain: Interval,
    hint: &Hint,
    spec: &QuadratureSpec,
) -> Result<EstimatedReal>
where
    F: FnMut(f64) -> Result<f64>,
{
    spec.validate()?;
    let map = Map::for_domain(domain, hint);
    let (ua, ub) = map.u_bounds(domain);

    let mut cuts: Vec<f64> = Vec::with_capacity(8 + hint.breaks.len());
    cuts.push(ua);
    cuts.push(ub);
    cuts.extend_from_slice(map.seed_cuts());
    for &b in hint.breaks.iter().chain(hint.center.iter()) {
        if domain.contains(b) {
            let u = map.inverse(b);
            if u > ua.min(ub) && u < ua.max(ub) {
                cuts.push(u);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    cuts.dedup();

    let mut evals = 0usize;
    let mut segments = Vec::with_capacity(64);
    for w in cuts.windows(2) {
        segments.push(kronrod(&mut f, &map, w[0], w[1], &mut evals)?);
    }

    let mut subdivisions = 0usize;
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.err).sum();
        if err <= spec.tolerance(value) {
            return Ok(EstimatedReal::new(value, err, evals));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.partial_cmp(&b.1.err).unwrap_or(core::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let seg = segments[worst];
        let mid = 0.5 * (seg.a + seg.b);
        let splittable = mid > seg.a && mid < seg.b;
        if subdivisions >= spec.max_subdivisions || !splittable {
            return Err(Error::NonConvergence {
                subdivisions,
                value,
                err_estimate: err,
            });
        }
        let left = kronrod(&mut f, &map, seg.a, mid, &mut evals)?;
        let right = kronrod(&mut f, &map, mid, seg.b, &mut evals)?;
        segments[worst] = left;
        segments.push(right);
        subdivisions += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn phi(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn normal_density_normalizes() {
        let r = integrate(phi, Interval::real_line(), &QuadratureSpec::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{r:?}");
        assert!(r.err_estimate >= 0.0 && r.err_estimate.is_finite());
        assert!(r.evaluations > 0);
    }

    #[test]
    fn odd_moment_cancels() {
        let r = integrate(
            |t| t * t * t * phi(t),
            Interval::real_line(),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn polynomial_on_unit_interval() {
        let r = integrate(|x| x * x, Interval::unit(), &QuadratureSpec::default()).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn half_lines_both_orientations() {
        let spec = QuadratureSpec::default();
        let up = integrate(|t| (-t).exp(), Interval::positive(), &spec).unwrap();
        assert!((up.value - 1.0).abs() < 1e-10);
        let down = integrate(
            |t| t.exp(),
            Interval::new(f64::NEG_INFINITY, 0.0).unwrap(),
            &spec,
        )
        .unwrap();
        assert!((down.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn off_center_peak_found_with_hint() {
        let f = |t: f64| phi(t - 40.0);
        let r = try_integrate_with(
            |t| Ok(f(t)),
            Interval::real_line(),
            &Hint::centered(40.0, 1.0),
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn jump_discontinuity_with_and_without_break() {
        let step = |t: f64| if t < 0.3 { 1.0 } else { 2.0 };
        let spec = QuadratureSpec::default();
        let plain = integrate(step, Interval::unit(), &spec).unwrap();
        assert!((plain.value - 1.7).abs() < 1e-9, "{plain:?}");
        let hinted = try_integrate_with(
            |t| Ok(step(t)),
            Interval::unit(),
            &Hint::default().with_breaks(&[0.3]),
            &spec,
        )
        .unwrap();
        assert!((hinted.value - 1.7).abs() < 1e-13);
        assert!(hinted.evaluations < plain.evaluations);
    }

    #[test]
    fn non_finite_integrand_reported() {
        let err = integrate(
            |t| if t > 0.5 { f64::NAN } else { 1.0 },
            Interval::unit(),
            &QuadratureSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { .. }));
    }

    #[test]
    fn subdivision_budget_exhaustion() {
        let spec = QuadratureSpec {
            max_subdivisions: 3,
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            ..QuadratureSpec::default()
        };
        let err = integrate(|t| (1.0 / t).sin(), Interval::new(1e-4, 1.0).unwrap(), &spec)
            .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn kronrod_weights_integrate_constants() {
        let total: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        assert!((total - 2.0).abs() < 1e-15);
        let gauss: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((gauss - 2.0).abs() < 1e-15);
    }
}
