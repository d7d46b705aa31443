//! Report documents and their JSON, CSV and text renderings.

use std::collections::BTreeMap;
use std::fmt::Write;

use collapse_core::collapsibility::{CollapsibilityVerdict, PointRecord, ProbeReport, ProbeStatus, ReversalReport};
use collapse_core::regression::{CoefficientVerdict, FitResult};
use collapse_core::scenarios::{CheckStatus, ScenarioReport};
use serde::Serialize;
use serde_json::Value;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "collapse";

#[derive(Clone, Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

/// The JSON report. Object keys are emitted in sorted order.
#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    pub identity: BTreeMap<String, Value>,
    pub seed: u64,
    pub status: CheckStatus,
    pub exit_code: i32,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

impl ReportDocument {
    pub fn new(command: &str, seed: u64, status: CheckStatus, result: Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool: Tool {
                name: TOOL_NAME,
                version: env!("CARGO_PKG_VERSION"),
            },
            command: command.to_string(),
            identity: BTreeMap::new(),
            seed,
            status,
            exit_code: crate::exit_code(status),
            result,
            timing_ms: None,
        }
    }

    pub fn with_identity(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.identity.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report documents serialize");
        let mut s = serde_json::to_string_pretty(&sorted(value)).expect("values serialize");
        s.push('\n');
        s
    }
}

/// Rebuilds every object with its keys in sorted order.
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let ordered: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, sorted(v))).collect();
            Value::Object(ordered.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("core results serialize")
}

pub fn status_name(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Indeterminate => "indeterminate",
        CheckStatus::Fail => "FAIL",
    }
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.6e}"),
        Some(v) => format!("{v}"),
        None => "-".to_string(),
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// CSV rows of the averaged grid points: one per `(x, y)` pair.
pub fn csv_grid(v: &CollapsibilityVerdict) -> String {
    let mut out = String::from("x,y,w,conditional_avg,marginal,gap,residual\n");
    for p in v.average_points() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.x,
            cell(p.y),
            cell(p.w),
            cell(p.conditional.map(|c| c.value)),
            cell(p.marginal.map(|m| m.value)),
            cell(p.gap),
            cell(p.residual.map(|r| r.value)),
        );
    }
    out
}

fn point_row(out: &mut String, p: &PointRecord) {
    let _ = writeln!(
        out,
        "  {:>8} {:>8} {:>8} {:>14} {:>14} {:>14} {:>14} {:>4}{}",
        p.x,
        p.y.map_or("-".into(), |y| y.to_string()),
        p.w.map_or("-".into(), |w| w.to_string()),
        num(p.conditional.map(|c| c.value)),
        num(p.marginal.map(|m| m.value)),
        num(p.gap),
        num(p.residual.map(|r| r.value)),
        if p.within { "ok" } else { "out" },
        p.error.as_ref().map_or(String::new(), |e| format!("  [{e}]")),
    );
}

pub fn render_verdict(v: &CollapsibilityVerdict) -> String {
    let mut out = render_grid(v);
    if let Some(p) = &v.condition_probes {
        out.push_str(&render_probes(p));
    }
    out
}

/// The verdict without its probe table.
fn render_grid(v: &CollapsibilityVerdict) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {:?} check: {:?}  (tol_abs {}, tol_rel {})",
        v.measure.name(),
        v.check,
        v.classification,
        v.grid.tol_abs,
        v.grid.tol_rel
    );
    let _ = writeln!(
        out,
        "  {:>8} {:>8} {:>8} {:>14} {:>14} {:>14} {:>14} {:>4}",
        "x", "y", "w", "conditional", "marginal", "gap", "residual", ""
    );
    for p in &v.points {
        point_row(&mut out, p);
    }
    if let Some(r) = &v.reversal {
        out.push_str(&render_reversal(r));
    }
    out
}

pub fn render_reversal(r: &ReversalReport) -> String {
    let mut out = format!(
        "reversal ({}): {}  conditional range [{}, {}]\n",
        r.measure.name(),
        if r.reversal { "YES" } else { "no" },
        num(Some(r.conditional_min)),
        num(Some(r.conditional_max))
    );
    for w in &r.witnesses {
        let _ = writeln!(out, "  witness x={} y={} marginal={}", w.x, w.y.map_or("-".into(), |y| y.to_string()), num(Some(w.marginal)));
    }
    out
}

/// Unavailable probes are marked `n/a` with their reason, apart from pass
/// and FAIL.
pub fn render_probes(p: &ProbeReport) -> String {
    let mut out = String::from("condition probes:\n");
    for o in &p.probes {
        let status = match o.status {
            ProbeStatus::Pass => "pass".to_string(),
            ProbeStatus::Fail => "FAIL".to_string(),
            ProbeStatus::Unavailable => "n/a (unavailable)".to_string(),
        };
        let implies: Vec<&str> = o.implies.iter().map(|m| m.name()).collect();
        let _ = writeln!(
            out,
            "  {:<40} {:<18} dev {:>14} tol {:e}  => {}{}",
            o.name,
            status,
            num(o.deviation),
            o.tolerance,
            implies.join(","),
            o.note.as_ref().map_or(String::new(), |n| format!("  ({n})")),
        );
    }
    out
}

fn render_fit(out: &mut String, label: &str, f: &FitResult) {
    let _ = write!(out, "  {label:<14}");
    for (i, name) in f.names.iter().enumerate() {
        let _ = write!(out, " {name}={:.5} (se {:.5})", f.coefficients[i], f.std_errors[i]);
    }
    let _ = writeln!(
        out,
        "  iter {} score {:.2e}{}",
        f.iterations,
        f.score_norm,
        if f.converged { "" } else { "  NOT CONVERGED" }
    );
    for w in &f.warnings {
        let _ = writeln!(out, "    warning: {w}");
    }
}

pub fn render_coefficient(v: &CoefficientVerdict) -> String {
    let mut out = format!(
        "coefficient check ({}, n={}, seed={}): {:?}  max gap {}  reversal {}\n",
        v.family.name(),
        v.n,
        v.seed.0,
        v.classification,
        num(Some(v.max_gap)),
        if v.reversal_flag { "YES" } else { "no" }
    );
    let _ = writeln!(out, "  {:>8} {:>14} {:>14} {:>14} {:>14}", "x", "cond. avg", "marginal", "gap", "tolerance");
    for p in &v.points {
        let _ = writeln!(
            out,
            "  {:>8} {:>14} {:>14} {:>14} {:>14} {}",
            p.x,
            num(Some(p.conditional_average)),
            num(Some(p.marginal)),
            num(Some(p.gap)),
            num(Some(p.tolerance)),
            if p.within { "ok" } else { "out" }
        );
    }
    render_fit(&mut out, "marginal", &v.marginal_fit);
    if let Some(c) = &v.conditional_fit {
        render_fit(&mut out, "conditional", c);
    }
    for s in &v.strata {
        render_fit(&mut out, &format!("w={} n={}", s.level, s.n), &s.fit);
    }
    out
}

pub fn render_scenario(r: &ScenarioReport) -> String {
    let mut out = format!("scenario {} (seed {}): {}\n  {}\n", r.scenario, r.seed.0, status_name(r.status), r.description);
    if !r.parameters.is_empty() {
        let ps: Vec<String> = r.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "  parameters: {}", ps.join(", "));
    }
    let _ = writeln!(out, "  {:<44} {:<13} {:>14} {:>14}  observed", "check", "status", "gap", "tolerance");
    for c in &r.checks {
        let _ = writeln!(
            out,
            "  {:<44} {:<13} {:>14} {:>14}  {}",
            c.check,
            status_name(c.status),
            num(c.gap),
            num(c.tolerance),
            c.observed
        );
    }
    for v in &r.verdicts {
        out.push('\n');
        out.push_str(&render_grid(v));
        if r.probes.is_none() {
            if let Some(p) = &v.condition_probes {
                out.push_str(&render_probes(p));
            }
        }
    }
    for b in &r.bivariate {
        out.push('\n');
        let _ = writeln!(out, "bivariate split, Fubini gap {} (budget {})", num(Some(b.fubini_gap)), num(Some(b.fubini_budget)));
        out.push_str(&render_grid(&b.verdict));
    }
    if let Some(c) = &r.coefficient {
        out.push('\n');
        out.push_str(&render_coefficient(c));
    }
    if let Some(p) = &r.probes {
        out.push('\n');
        out.push_str(&render_probes(p));
    }
    for n in &r.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
