//! Command-line front end: scenario runs, config-driven checks and measure
//! evaluation, regression studies, and report emission.
//!
//! Exit codes: 0 every check passed, 1 a check failed, 2 usage or config
//! error, 3 numerical failure (indeterminate).

pub mod config;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use collapse_core::collapsibility::{check_average, check_simple, detect_reversal, probe_conditions, Classification};
use collapse_core::distributions::Seed;
use collapse_core::measures::{evaluate, MeasureKind, MeasurePoint};
use collapse_core::regression::{check_beta_collapsibility, RegressionFamily, RegressionSpec, DEFAULT_THETA};
use collapse_core::scenarios::{self, CheckStatus, RunOptions};
use collapse_core::Error;
use serde_json::json;

use crate::config::{CheckKindName, ConfigDocument, Expectation, OutputFormat};
use crate::report::{to_value, ReportDocument};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;

/// Environment variable that relocates relative output paths.
pub const OUT_DIR_ENV: &str = "COLLAPSE_OUT_DIR";

pub fn exit_code(status: CheckStatus) -> i32 {
    match status {
        CheckStatus::Pass => EXIT_PASS,
        CheckStatus::Fail => EXIT_FAIL,
        CheckStatus::Indeterminate => EXIT_INDETERMINATE,
    }
}

fn error_code(e: &Error) -> i32 {
    let numerical = e.is_numerical()
        || matches!(
            e,
            Error::RankDeficient
                | Error::Separation
                | Error::NotConverged { .. }
                | Error::Underdispersed { .. }
                | Error::FactorizationViolated { .. }
        );
    if numerical {
        EXIT_INDETERMINATE
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "collapse", version, about = "Collapsibility of association measures over a covariate")]
pub struct Cli {
    /// Record wall-clock time in reports.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Built-in scenario catalog.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Collapsibility check of a configured model.
    Check(CheckArgs),
    /// Evaluate one measure of a configured model at a point.
    Measure(MeasureArgs),
    /// Simulate a regression study and check coefficient collapsibility.
    Regress(RegressArgs),
}

#[derive(Debug, Subcommand)]
pub enum ScenarioAction {
    /// List the catalog.
    List,
    /// Run one scenario.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub name: String,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample size of stochastic scenarios.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub x_points: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub y_points: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Averaged grid as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `x`, `x,y` or `x,y,w`; use `x,,w` to give `w` without `y`.
    #[arg(long)]
    pub at: String,
    /// Overrides the configured measure.
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: RegressionFamily,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x_points: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub expect: Option<Expectation>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<RegressionFamily, String> {
    RegressionFamily::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = RegressionFamily::ALL.iter().map(|f| f.name()).collect();
        format!("unknown family `{s}` (known: {})", names.join(", "))
    })
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    timing: bool,
    started: Instant,
}

impl Io<'_> {
    fn fail(&mut self, code: i32, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        code
    }

    fn finish(&mut self, mut doc: ReportDocument, text: &str, json: Option<&Path>) -> i32 {
        let _ = self.out.write_all(text.as_bytes());
        let elapsed = self.started.elapsed().as_millis() as u64;
        if self.timing {
            doc.timing_ms = Some(elapsed);
            let _ = writeln!(self.err, "elapsed: {elapsed} ms");
        }
        if let Some(path) = json {
            match output::write_atomic(path, doc.to_json().as_bytes()) {
                Ok(p) => {
                    let _ = writeln!(self.err, "report written to {}", p.display());
                }
                Err(e) => return self.fail(EXIT_USAGE, e),
            }
        }
        let _ = writeln!(self.out, "status: {}", report::status_name(doc.status));
        doc.exit_code
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(rendered.as_bytes()) } else { out.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let mut io = Io {
        out,
        err,
        timing: cli.timing,
        started: Instant::now(),
    };
    match cli.command {
        Command::Scenarios { action: ScenarioAction::List } => list_scenarios(&mut io),
        Command::Scenarios { action: ScenarioAction::Run(a) } => run_scenario(&mut io, &a),
        Command::Check(a) => run_check(&mut io, &a),
        Command::Measure(a) => run_measure(&mut io, &a),
        Command::Regress(a) => run_regress(&mut io, &a),
    }
}

fn list_scenarios(io: &mut Io<'_>) -> i32 {
    let catalog = match scenarios::catalog() {
        Ok(c) => c,
        Err(e) => return io.fail(error_code(&e), e),
    };
    for s in catalog {
        let _ = writeln!(io.out, "{:<24} {}{}", s.name, s.description, if s.stochastic { " [stochastic]" } else { "" });
    }
    EXIT_PASS
}

fn run_scenario(io: &mut Io<'_>, a: &RunArgs) -> i32 {
    let opts = RunOptions {
        n: a.n,
        lambda: a.lambda,
        theta: a.theta,
        alpha: a.alpha,
        beta: a.beta,
        x_points: a.x_points.clone(),
        y_points: a.y_points.clone(),
        ..RunOptions::seeded(a.seed)
    };
    let report = match scenarios::run(&a.name, &opts) {
        Ok(r) => r,
        Err(e) => return io.fail(error_code(&e), e),
    };
    let doc = ReportDocument::new("scenarios run", a.seed, report.status, to_value(&report))
        .with_identity("scenario", a.name.as_str())
        .with_identity("options", to_value(&opts));
    io.finish(doc, &report::render_scenario(&report), a.json.as_deref())
}

fn fnv1a(bytes: &[u8]) -> String {
    let h = bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3));
    format!("{h:016x}")
}

fn load(io: &mut Io<'_>, path: &Path) -> Result<(ConfigDocument, String), i32> {
    ConfigDocument::load(path).map_err(|e| io.fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn judge(classification: Classification, expect: Option<Expectation>) -> CheckStatus {
    match (classification, expect) {
        (Classification::Indeterminate, _) => CheckStatus::Indeterminate,
        (c, None) | (c, Some(Expectation::Collapsible)) if c.is_collapsible() => CheckStatus::Pass,
        (c, Some(Expectation::NotCollapsible)) if !c.is_collapsible() => CheckStatus::Pass,
        _ => CheckStatus::Fail,
    }
}

fn run_check(io: &mut Io<'_>, a: &CheckArgs) -> i32 {
    let (doc, text) = match load(io, &a.config) {
        Ok(d) => d,
        Err(code) => return code,
    };
    let prepared = doc
        .build_model()
        .and_then(|m| doc.check().and_then(|c| Ok((m, c, c.measure()?, c.grid()?))));
    let (model, section, measure, grid) = match prepared {
        Ok(p) => p,
        Err(e) => return io.fail(EXIT_USAGE, format!("{}: {e}", a.config.display())),
    };
    let verdict = match section.kind() {
        CheckKindName::Average => check_average(measure, &model, &grid),
        CheckKindName::Simple => check_simple(measure, &model, &grid),
    };
    let mut verdict = match verdict {
        Ok(v) => v,
        Err(e) => return io.fail(error_code(&e), e),
    };
    let mut notes = Vec::new();
    if section.probes.unwrap_or(true) {
        match probe_conditions(&model, &grid) {
            Ok(p) => verdict = verdict.with_probes(p),
            Err(e) => notes.push(format!("condition probes unavailable: {e}")),
        }
    }
    if section.reversal.unwrap_or(true) {
        match detect_reversal(measure, &model, &grid) {
            Ok(r) => verdict = verdict.with_reversal(r),
            Err(e) => notes.push(format!("reversal detection unavailable: {e}")),
        }
    }
    let status = judge(verdict.classification, section.expect);
    let mut rendered = format!("model {} from {}\n", model.name, a.config.display());
    rendered.push_str(&report::render_verdict(&verdict));
    for n in &notes {
        rendered.push_str(&format!("note: {n}\n"));
    }
    let result = json!({ "verdict": to_value(&verdict), "notes": notes, "expect": section.expect });
    let report_doc = ReportDocument::new("check", 0, status, result)
        .with_identity("config", a.config.display().to_string())
        .with_identity("config_checksum", fnv1a(text.as_bytes()))
        .with_identity("model", model.name.as_str());

    let configured = doc.output.as_ref().and_then(|o| o.path.clone().map(|p| (o.format.unwrap_or(OutputFormat::Json), p)));
    let mut csv_path = a.csv.clone();
    let mut json_path = a.json.clone();
    if let (Some((format, path)), None, None) = (configured, &csv_path, &json_path) {
        match format {
            OutputFormat::Json => json_path = Some(PathBuf::from(path)),
            OutputFormat::Csv => csv_path = Some(PathBuf::from(path)),
            OutputFormat::Text => {
                if let Err(e) = output::write_atomic(Path::new(&path), rendered.as_bytes()) {
                    return io.fail(EXIT_USAGE, e);
                }
            }
        }
    }
    if let Some(path) = csv_path {
        if let Err(e) = output::write_atomic(&path, report::csv_grid(&verdict).as_bytes()) {
            return io.fail(EXIT_USAGE, e);
        }
    }
    io.finish(report_doc, &rendered, json_path.as_deref())
}

fn parse_point(at: &str) -> Result<(f64, Option<f64>, Option<f64>), String> {
    let parts: Vec<&str> = at.split(',').map(str::trim).collect();
    if parts.is_empty() || parts.len() > 3 || parts[0].is_empty() {
        return Err(format!("--at expects x[,y][,w], got `{at}`"));
    }
    let field = |i: usize| -> Result<Option<f64>, String> {
        match parts.get(i) {
            None | Some(&"") => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| format!("--at: `{s}` is not a finite number")),
        }
    };
    Ok((field(0)?.unwrap_or_default(), field(1)?, field(2)?))
}

fn run_measure(io: &mut Io<'_>, a: &MeasureArgs) -> i32 {
    let (x, y, w) = match parse_point(&a.at) {
        Ok(p) => p,
        Err(e) => return io.fail(EXIT_USAGE, e),
    };
    let (doc, text) = match load(io, &a.config) {
        Ok(d) => d,
        Err(code) => return code,
    };
    let model = match doc.build_model() {
        Ok(m) => m,
        Err(e) => return io.fail(EXIT_USAGE, format!("{}: {e}", a.config.display())),
    };
    let name = match (&a.measure, &doc.check) {
        (Some(m), _) => m.clone(),
        (None, Some(c)) => c.measure.clone(),
        (None, None) => "EDF".to_string(),
    };
    let Some(measure) = MeasureKind::from_name(&name) else {
        return io.fail(EXIT_USAGE, format!("unknown measure `{name}`"));
    };
    if measure.needs_y() && y.is_none() {
        return io.fail(EXIT_USAGE, format!("{} needs a y coordinate in --at", measure.name()));
    }
    let marginal = match evaluate(measure, &model, MeasurePoint::new(x, y, None)) {
        Ok(v) => v,
        Err(e) => return io.fail(error_code(&e), e),
    };
    let conditional = match w {
        Some(w) => match evaluate(measure, &model, MeasurePoint::new(x, y, Some(w))) {
            Ok(v) => Some(v),
            Err(e) => return io.fail(error_code(&e), e),
        },
        None => None,
    };
    let mut rendered = format!(
        "{} of {} at x={}{}\n  marginal     {:.10e} (err {:.2e})\n",
        measure.name(),
        model.name,
        x,
        y.map_or(String::new(), |y| format!(", y={y}")),
        marginal.value,
        marginal.err_estimate
    );
    if let (Some(c), Some(w)) = (conditional, w) {
        rendered.push_str(&format!("  conditional  {:.10e} (err {:.2e}) at w={w}\n", c.value, c.err_estimate));
    }
    let result = json!({
        "measure": measure,
        "x": x,
        "y": y,
        "w": w,
        "marginal": to_value(&marginal),
        "conditional": conditional.map(|c| to_value(&c)),
    });
    let doc = ReportDocument::new("measure", 0, CheckStatus::Pass, result)
        .with_identity("config", a.config.display().to_string())
        .with_identity("config_checksum", fnv1a(text.as_bytes()));
    io.finish(doc, &rendered, a.json.as_deref())
}

fn run_regress(io: &mut Io<'_>, a: &RegressArgs) -> i32 {
    if a.family == RegressionFamily::NegBin && a.gamma != 0.0 {
        return io.fail(EXIT_USAGE, "the negbin study uses an x-free frailty; --gamma must be 0");
    }
    if !(a.theta > 0.0 && a.theta.is_finite()) {
        return io.fail(EXIT_USAGE, "--theta must be positive");
    }
    if a.n == 0 {
        return io.fail(EXIT_USAGE, "--n must be positive");
    }
    let spec = RegressionSpec::standard(a.family, a.gamma, a.theta);
    let xs = a.x_points.clone().unwrap_or_else(|| vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    let verdict = match check_beta_collapsibility(&spec, a.n, Seed(a.seed), &xs) {
        Ok(v) => v,
        Err(e) => return io.fail(error_code(&e), e),
    };
    let converged = verdict.marginal_fit.converged
        && verdict.conditional_fit.as_ref().is_none_or(|f| f.converged)
        && verdict.strata.iter().all(|s| s.fit.converged);
    let status = if converged { judge(verdict.classification, a.expect) } else { CheckStatus::Indeterminate };
    let doc = ReportDocument::new("regress", a.seed, status, to_value(&verdict))
        .with_identity("family", a.family.name())
        .with_identity("n", a.n)
        .with_identity("gamma", a.gamma)
        .with_identity("theta", a.theta);
    io.finish(doc, &report::render_coefficient(&verdict), a.json.as_deref())
}
