//! Declarative model and check configuration (TOML, closed schema).

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use collapse_core::collapsibility::GridSpec;
use collapse_core::distributions::{Family, FamilyTag};
use collapse_core::expr::{parse_expression, Bindings, Expr, Var};
use collapse_core::measures::MeasureKind;
use collapse_core::model::{
    Bound, ConditionalModel, CovariateLaw, NumericSettings, ResponseLaw, SupportRule, YKind,
};
use collapse_core::numerics::{DiffSpec, Interval, QuadMethod, QuadratureSpec};
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub schema_version: u32,
    pub model: ModelSection,
    pub check: Option<CheckSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    pub y_kind: Option<YKindName>,
    pub x_domain: Option<[f64; 2]>,
    pub probe_xs: Option<Vec<f64>>,
    pub covariate: CovariateSection,
    pub response: ResponseSection,
    pub numerics: Option<NumericsSection>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YKindName {
    Continuous,
    Binary,
    Count,
}

/// Exactly one of `family`, `density`, `kernel`, `levels` or `point`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSection {
    pub family: Option<String>,
    pub params: Option<Vec<String>>,
    pub density: Option<String>,
    pub kernel: Option<String>,
    pub support: Option<[f64; 2]>,
    pub levels: Option<Vec<f64>>,
    pub probs: Option<Vec<String>>,
    pub point: Option<String>,
}

/// Either a `family` with `params`, or any of `mean`, `density`, `cdf`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSection {
    pub family: Option<String>,
    pub params: Option<Vec<String>>,
    pub mean: Option<String>,
    pub density: Option<String>,
    pub cdf: Option<String>,
    pub support: Option<[String; 2]>,
    pub envelope: Option<[f64; 2]>,
    pub truncate: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub quadrature: Option<QuadName>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
    pub hermite_nodes: Option<usize>,
    pub diff_step: Option<f64>,
    pub richardson_levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadName {
    Adaptive,
    GaussHermite,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub measure: String,
    pub kind: Option<CheckKindName>,
    pub x_points: Vec<f64>,
    pub y_points: Option<Vec<f64>>,
    pub w_points: Option<Vec<f64>>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub probes: Option<bool>,
    pub reversal: Option<bool>,
    pub expect: Option<Expectation>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKindName {
    Average,
    Simple,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, serde::Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Collapsible,
    NotCollapsible,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<OutputFormat>,
    pub path: Option<String>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc: ConfigDocument = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn build_model(&self) -> Result<ConditionalModel, ConfigError> {
        self.model.build()
    }

    pub fn check(&self) -> Result<&CheckSection, ConfigError> {
        self.check.as_ref().ok_or_else(|| err("the config has no [check] section"))
    }
}

fn expression(text: &str, allowed: &[Var], field: &str) -> Result<Expr, ConfigError> {
    let e = parse_expression(text).map_err(|e| err(format!("{field}: {e}")))?;
    if let Some(v) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
        let names: Vec<&str> = allowed.iter().map(|v| v.name()).collect();
        return Err(err(format!(
            "{field}: variable `{}` is not available here (allowed: {})",
            v.name(),
            if names.is_empty() { "none".to_string() } else { names.join(", ") }
        )));
    }
    Ok(e)
}

fn expressions(texts: &[String], allowed: &[Var], field: &str) -> Result<Vec<Expr>, ConfigError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| expression(t, allowed, &format!("{field}[{i}]")))
        .collect()
}

fn family_tag(name: &str, field: &str) -> Result<FamilyTag, ConfigError> {
    FamilyTag::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = FamilyTag::ALL.iter().map(|t| t.name()).collect();
        err(format!("{field}: unknown family `{name}` (known: {})", known.join(", ")))
    })
}

fn interval(pair: [f64; 2], field: &str) -> Result<Interval, ConfigError> {
    Interval::new(pair[0], pair[1]).map_err(|e| err(format!("{field}: {e}")))
}

fn family_params(tag: FamilyTag, params: &Option<Vec<String>>, allowed: &[Var], field: &str) -> Result<Vec<Expr>, ConfigError> {
    let params = params.as_ref().ok_or_else(|| err(format!("{field}.params is required with a family")))?;
    if params.len() != tag.arity() {
        return Err(err(format!(
            "{field}.params: {} takes {} parameter(s), got {}",
            tag.name(),
            tag.arity(),
            params.len()
        )));
    }
    expressions(params, allowed, &format!("{field}.params"))
}

fn eval_all(exprs: &[Expr], b: &Bindings) -> collapse_core::Result<Vec<f64>> {
    exprs.iter().map(|e| e.eval(b)).collect()
}

impl CovariateSection {
    fn build(&self) -> Result<CovariateLaw, ConfigError> {
        let forms = [
            self.family.is_some(),
            self.density.is_some(),
            self.kernel.is_some(),
            self.levels.is_some(),
            self.point.is_some(),
        ];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(err(
                "model.covariate needs exactly one of family, density, kernel, levels or point",
            ));
        }
        let stray = |name: &str, present: bool| -> Result<(), ConfigError> {
            if present {
                Err(err(format!("model.covariate.{name} does not apply to this covariate form")))
            } else {
                Ok(())
            }
        };
        if let Some(name) = &self.family {
            stray("support", self.support.is_some())?;
            stray("probs", self.probs.is_some())?;
            let tag = family_tag(name, "model.covariate.family")?;
            let params = family_params(tag, &self.params, &[Var::X], "model.covariate")?;
            return Ok(CovariateLaw::family(move |x| Family::new(tag, &eval_all(&params, &Bindings::x(x))?)));
        }
        stray("params", self.params.is_some())?;
        if let Some(text) = self.density.as_ref().or(self.kernel.as_ref()) {
            stray("probs", self.probs.is_some())?;
            let e = expression(text, &[Var::X, Var::W], "model.covariate.density")?;
            let support = interval(
                self.support.ok_or_else(|| err("model.covariate.support is required with a density or kernel"))?,
                "model.covariate.support",
            )?;
            let f = move |w: f64, x: f64| e.eval(&Bindings::xw(x, w));
            return Ok(if self.density.is_some() {
                CovariateLaw::pdf(f, support)
            } else {
                CovariateLaw::kernel(f, support)
            });
        }
        stray("support", self.support.is_some())?;
        if let Some(levels) = &self.levels {
            let probs = self.probs.as_ref().ok_or_else(|| err("model.covariate.probs is required with levels"))?;
            if probs.len() != levels.len() {
                return Err(err("model.covariate.probs needs one entry per level"));
            }
            let fns = expressions(probs, &[Var::X], "model.covariate.probs")?
                .into_iter()
                .map(|e| -> collapse_core::model::XFn { Arc::new(move |x| e.eval(&Bindings::x(x))) })
                .collect();
            return CovariateLaw::discrete(levels.clone(), fns).map_err(|e| err(format!("model.covariate: {e}")));
        }
        stray("probs", self.probs.is_some())?;
        let e = expression(self.point.as_deref().unwrap_or_default(), &[Var::X], "model.covariate.point")?;
        Ok(CovariateLaw::point_mass(move |x| e.eval(&Bindings::x(x))))
    }
}

impl ResponseSection {
    fn support_rule(&self) -> Result<Option<SupportRule>, ConfigError> {
        let envelope = match self.envelope {
            Some(pair) => Some(interval(pair, "model.response.envelope")?),
            None => None,
        };
        let rule = match &self.support {
            Some([lo, hi]) => {
                let lo = expression(lo, &[Var::X, Var::W], "model.response.support[0]")?;
                let hi = expression(hi, &[Var::X, Var::W], "model.response.support[1]")?;
                if lo.variables().is_empty() && hi.variables().is_empty() {
                    let b = Bindings::default();
                    let (a, c) = (
                        lo.eval(&b).map_err(|e| err(format!("model.response.support: {e}")))?,
                        hi.eval(&b).map_err(|e| err(format!("model.response.support: {e}")))?,
                    );
                    SupportRule::fixed(interval([a, c], "model.response.support")?)
                } else {
                    let bound = |e: Expr| Bound::Param(Arc::new(move |x, w| e.eval(&Bindings::xw(x, w))));
                    SupportRule::parametric(bound(lo), bound(hi), envelope.unwrap_or_else(Interval::real_line))
                }
            }
            None => match envelope {
                Some(env) => SupportRule::fixed(env),
                None => return Ok(self.truncate.map(|t| SupportRule::real_line().with_truncation(t))),
            },
        };
        Ok(Some(match self.truncate {
            Some(t) => rule.with_truncation(t),
            None => rule,
        }))
    }

    fn build(&self) -> Result<ResponseLaw, ConfigError> {
        let xw = [Var::X, Var::W];
        let yxw = [Var::X, Var::Y, Var::W];
        let support = self.support_rule()?;
        if let Some(name) = &self.family {
            for (field, present) in [("mean", self.mean.is_some()), ("density", self.density.is_some()), ("cdf", self.cdf.is_some())] {
                if present {
                    return Err(err(format!("model.response.{field} cannot be combined with a family")));
                }
            }
            let tag = family_tag(name, "model.response.family")?;
            let params = family_params(tag, &self.params, &xw, "model.response")?;
            let law = ResponseLaw::from_family(tag, move |x, w| Family::new(tag, &eval_all(&params, &Bindings::xw(x, w))?));
            return Ok(match support {
                Some(s) => law.with_support(s),
                None => law,
            });
        }
        if self.params.is_some() {
            return Err(err("model.response.params requires a family"));
        }
        let mean = match &self.mean {
            Some(t) => Some(expression(t, &xw, "model.response.mean")?),
            None => None,
        };
        let mut law = match (&self.density, mean.clone()) {
            (Some(t), _) => {
                let d = expression(t, &yxw, "model.response.density")?;
                ResponseLaw::from_density(
                    move |y, x, w| d.eval(&Bindings::xyw(x, y, w)),
                    support.clone().unwrap_or_else(SupportRule::real_line),
                )
            }
            (None, Some(m)) => {
                let law = ResponseLaw::from_mean(move |x, w| m.eval(&Bindings::xw(x, w)));
                match support.clone() {
                    Some(s) => law.with_support(s),
                    None => law,
                }
            }
            (None, None) => return Err(err("model.response needs a family, a mean or a density")),
        };
        if let (Some(m), true) = (mean, self.density.is_some()) {
            law = law.with_mean(move |x, w| m.eval(&Bindings::xw(x, w)));
        }
        if let Some(t) = &self.cdf {
            let c = expression(t, &yxw, "model.response.cdf")?;
            law = law.with_cdf(move |y, x, w| c.eval(&Bindings::xyw(x, y, w)));
        }
        Ok(law)
    }
}

impl NumericsSection {
    fn settings(&self) -> NumericSettings {
        let mut s = NumericSettings::default();
        let q: &mut QuadratureSpec = &mut s.quadrature;
        if let Some(m) = self.quadrature {
            q.method = match m {
                QuadName::Adaptive => QuadMethod::AdaptiveSubdivision,
                QuadName::GaussHermite => QuadMethod::GaussHermite,
            };
        }
        q.abs_tol = self.abs_tol.unwrap_or(q.abs_tol);
        q.rel_tol = self.rel_tol.unwrap_or(q.rel_tol);
        q.max_subdivisions = self.max_subdivisions.unwrap_or(q.max_subdivisions);
        q.hermite_nodes = self.hermite_nodes.unwrap_or(q.hermite_nodes);
        let d: &mut DiffSpec = &mut s.diff;
        d.base_step = self.diff_step.unwrap_or(d.base_step);
        d.richardson_levels = self.richardson_levels.unwrap_or(d.richardson_levels);
        s
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<ConditionalModel, ConfigError> {
        let name = self.name.clone().unwrap_or_else(|| "config".to_string());
        let mut b = ConditionalModel::builder(name)
            .covariate(self.covariate.build()?)
            .response(self.response.build()?)
            .y_kind(match self.y_kind.unwrap_or(YKindName::Continuous) {
                YKindName::Continuous => YKind::Continuous,
                YKindName::Binary => YKind::Binary,
                YKindName::Count => YKind::Count,
            });
        if let Some(d) = self.x_domain {
            b = b.x_domain(interval(d, "model.x_domain")?);
        }
        if let Some(xs) = &self.probe_xs {
            b = b.probe_xs(xs);
        }
        if let Some(n) = &self.numerics {
            b = b.settings(n.settings());
        }
        b.build().map_err(|e| err(format!("model: {e}")))
    }
}

impl CheckSection {
    pub fn measure(&self) -> Result<MeasureKind, ConfigError> {
        MeasureKind::from_name(&self.measure).ok_or_else(|| {
            let known: Vec<&str> = MeasureKind::ALL.iter().map(|m| m.name()).collect();
            err(format!("check.measure: unknown measure `{}` (known: {})", self.measure, known.join(", ")))
        })
    }

    pub fn kind(&self) -> CheckKindName {
        self.kind.unwrap_or(CheckKindName::Average)
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        let mut g = GridSpec::new(&self.x_points);
        if let Some(ys) = &self.y_points {
            g = g.with_y(ys);
        }
        if let Some(ws) = &self.w_points {
            g = g.with_w(ws);
        }
        let (a, r) = (self.tol_abs.unwrap_or(g.tol_abs), self.tol_rel.unwrap_or(g.tol_rel));
        g = g.with_tolerances(a, r);
        g.validate().map_err(|e| err(format!("check: {e}")))?;
        if self.kind() == CheckKindName::Simple && g.w_points.is_empty() {
            return Err(err("check.w_points is required for a simple check"));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORM_NORMAL: &str = r#"
schema_version = 1

[model]
name = "uniform-normal"
x_domain = [0.0, inf]

[model.covariate]
family = "normal"
params = ["x", "1"]

[model.response]
family = "uniform"
params = ["0", "x^2 + (w - x)^2"]

[check]
measure = "EDF"
x_points = [0.5, 1.0, 1.5, 2.0]
"#;

    #[test]
    fn builds_a_family_model() {
        let doc = ConfigDocument::parse(UNIFORM_NORMAL).unwrap();
        let m = doc.build_model().unwrap();
        assert!((m.marginal_mean(1.0).unwrap().value - 1.0).abs() < 1e-9);
        assert_eq!(doc.check().unwrap().measure().unwrap(), MeasureKind::Edf);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = UNIFORM_NORMAL.replace("measure =", "measur =");
        assert!(ConfigDocument::parse(&bad).unwrap_err().0.contains("measur"));
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let bad = UNIFORM_NORMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(ConfigDocument::parse(&bad).is_err());
    }

    #[test]
    fn rejects_out_of_scope_variables() {
        let bad = UNIFORM_NORMAL.replace(r#"params = ["x", "1"]"#, r#"params = ["w", "1"]"#);
        let doc = ConfigDocument::parse(&bad).unwrap();
        assert!(doc.build_model().unwrap_err().0.contains("`w`"));
    }

    #[test]
    fn expression_models() {
        let text = r#"
schema_version = 1
[model]
[model.covariate]
density = "normpdf(w - x)"
support = [-inf, inf]
[model.response]
mean = "x + w"
"#;
        let m = ConfigDocument::parse(text).unwrap().build_model().unwrap();
        assert!((m.marginal_mean(0.5).unwrap().value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn discrete_covariate() {
        let text = r#"
schema_version = 1
[model]
[model.covariate]
levels = [0.0, 1.0]
probs = ["0.25", "0.75"]
[model.response]
mean = "x * (1 + w)"
"#;
        let m = ConfigDocument::parse(text).unwrap().build_model().unwrap();
        assert!((m.marginal_mean(2.0).unwrap().value - 3.5).abs() < 1e-12);
    }

    #[test]
    fn ambiguous_covariate_is_rejected() {
        let text = r#"
schema_version = 1
[model]
[model.covariate]
family = "normal"
params = ["x", "1"]
point = "x"
[model.response]
mean = "x"
"#;
        assert!(ConfigDocument::parse(text).unwrap().build_model().is_err());
    }
}
