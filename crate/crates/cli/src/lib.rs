//! Command-line driver: reads a network and a property file, runs every
//! property and prints one result line each.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use relucert::network::{Network, Norm};
use relucert::parallel::{max_delta_parallel, verify_global_partitioned, verify_parallel, BatchConfig};
use relucert::properties::{
    parse_spec_file, MaxDelta, MaxDeltaQuery, PropertyKind, PropertyOutcome, PropertyVerdict, RobustnessSpec,
    SearchKind, SpecLine,
};
use relucert::reluverify::TimeoutReason;
use relucert::report::{emit_table, monotonicity_warnings, Format, ReportCell, ReportRow, Robust};
use thiserror::Error;

pub const EXIT_ROBUST: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_TIMEOUT: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: relucert::Error },

    #[error(transparent)]
    Core(#[from] relucert::Error),

    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Check every property line.
    Verify,
    /// Search the largest robust radius for each local property, up to its delta.
    MaxDelta,
    /// Render local-conf results as a table with one column group per eps.
    ReportTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "relucert", version, about = "Complete robustness verification for ReLU classifiers")]
pub struct RunConfig {
    /// Network file (relunet v1 format).
    #[arg(long = "net")]
    pub network_path: PathBuf,

    /// Property file, one query per line.
    #[arg(long = "spec")]
    pub spec_path: PathBuf,

    #[arg(long, default_value_t = default_workers(), value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: u32,

    /// Per-property time limit in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,

    /// Norm for lines that do not name one.
    #[arg(long, default_value = "linf", value_parser = parse_norm)]
    pub norm: Norm,

    /// Strictness margin for label properties.
    #[arg(long, default_value_t = 1e-6)]
    pub margin: f64,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,

    /// Rerun each property with one worker to fill the sequential time column.
    #[arg(long)]
    pub seq_baseline: bool,

    /// Also write the output to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Mode::Verify)]
    pub mode: Mode,
}

fn default_workers() -> u32 {
    std::thread::available_parallelism().map_or(1, |n| n.get() as u32)
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    s.parse().map_err(|e: relucert::Error| e.to_string())
}

impl RunConfig {
    pub fn new(network_path: impl Into<PathBuf>, spec_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            network_path: network_path.into(),
            spec_path: spec_path.into(),
            workers: 1,
            timeout: None,
            norm: Norm::Linf,
            margin: 1e-6,
            format: OutputFormat::Text,
            seq_baseline: false,
            report: None,
            mode: Mode::Verify,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.timeout {
            if !(t > 0.0) || !t.is_finite() {
                return Err(CliError::Usage(format!("--timeout must be positive, got {t}")));
            }
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(CliError::Usage(format!("--margin must be positive, got {}", self.margin)));
        }
        if self.workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(())
    }

    fn batch(&self, workers: u32) -> BatchConfig {
        let mut cfg = BatchConfig::with_workers(workers as usize);
        cfg.verify.margin = self.margin;
        cfg.verify.budget.timeout = self.timeout.map(Duration::from_secs_f64);
        cfg
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn parse_network(path: &Path) -> Result<Network, CliError> {
    Network::from_text(&read(path)?).map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

/// Verdict tally deciding the exit code.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    violated: bool,
    timeout: bool,
}

impl Tally {
    fn exit_code(self) -> i32 {
        if self.violated {
            EXIT_VIOLATED
        } else if self.timeout {
            EXIT_TIMEOUT
        } else {
            EXIT_ROBUST
        }
    }
}

/// Runs `cfg`, writing results to `out` and warnings to `err`. Returns the exit code.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match try_run(cfg, err) {
        Ok((code, text)) => {
            let _ = out.write_all(text.as_bytes());
            if let Some(path) = &cfg.report {
                if let Err(e) = std::fs::write(path, &text) {
                    let _ = writeln!(err, "error: {}: {e}", path.display());
                    return EXIT_INPUT;
                }
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn try_run(cfg: &RunConfig, err: &mut dyn Write) -> Result<(i32, String), CliError> {
    cfg.validate()?;
    let net = Arc::new(parse_network(&cfg.network_path)?);
    let lines = parse_spec_file(&read(&cfg.spec_path)?, cfg.norm)
        .map_err(|source| CliError::Input { path: cfg.spec_path.clone(), source })?;
    for line in &lines {
        match line {
            SpecLine::Verify(spec) => spec.validate(&net)?,
            SpecLine::MaxDelta(q) => q.spec_at(q.delta_hi).validate(&net)?,
        }
    }
    match cfg.mode {
        Mode::Verify => run_verify(cfg, &net, &lines),
        Mode::MaxDelta => run_max_delta(cfg, &net, &lines),
        Mode::ReportTable => run_table(cfg, &net, &lines, err),
    }
}

struct Timed {
    verdict: PropertyVerdict,
    par: Duration,
    seq: Option<Duration>,
}

fn check(cfg: &RunConfig, net: &Arc<Network>, spec: &RobustnessSpec) -> Result<Timed, CliError> {
    let once = |workers: u32| -> Result<(PropertyVerdict, Duration), CliError> {
        let t = Instant::now();
        let batch = cfg.batch(workers);
        let v = if spec.kind == PropertyKind::GlobalConfidence && workers > 1 {
            verify_global_partitioned(net, spec, workers as usize, &batch)?
        } else {
            verify_parallel(net, spec, &batch)?
        };
        Ok((v, t.elapsed()))
    };
    let (verdict, par) = once(cfg.workers)?;
    let seq = if cfg.seq_baseline { Some(once(1)?.1) } else { None };
    Ok(Timed { verdict, par, seq })
}

fn fmt_point(x: &[f64]) -> String {
    let inner: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", inner.join(", "))
}

fn reason(r: &TimeoutReason) -> String {
    match r {
        TimeoutReason::Deadline => "deadline".into(),
        TimeoutReason::SplitLimit => "split-limit".into(),
        TimeoutReason::Cancelled => "cancelled".into(),
        TimeoutReason::SolverLimit(m) => format!("solver-limit ({m})"),
        TimeoutReason::ValidationFailure(v) => format!("validation-failure ({})", v.reason),
        TimeoutReason::WorkerFailure(m) => format!("worker-failure ({m})"),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn verdict_line(spec: &RobustnessSpec, t: &Timed, format: OutputFormat) -> String {
    let s = &t.verdict.stats;
    let seq = t.seq.map_or("-".into(), |d| format!("{:.3}", d.as_secs_f64()));
    let (status, detail) = match &t.verdict.outcome {
        PropertyOutcome::Robust => ("ROBUST", String::new()),
        PropertyOutcome::Violated(r) => {
            let pts = match r.points.as_slice() {
                [x] => format!("x={}", fmt_point(x)),
                pts => {
                    pts.iter().enumerate().map(|(i, p)| format!("x{}={}", i + 1, fmt_point(p))).collect::<Vec<_>>().join(" ")
                }
            };
            ("VIOLATED", format!("{pts} label={} gap={:?}", r.label, r.gap))
        }
        PropertyOutcome::Timeout(r) => ("TIMEOUT", format!("reason={}", reason(r))),
    };
    match format {
        OutputFormat::Text => {
            let mut line = status.to_string();
            if !detail.is_empty() {
                let _ = write!(line, " {detail}");
            }
            let _ = write!(
                line,
                " delta={} splits={} lp_calls={} time={:.3}",
                spec.delta,
                s.splits,
                s.lp_calls,
                t.par.as_secs_f64()
            );
            if t.seq.is_some() {
                let _ = write!(line, " seq_time={seq}");
            }
            line
        }
        OutputFormat::Csv => format!(
            "{},{},{},{},{},{:.3},{},{}",
            status.to_ascii_lowercase(),
            spec.delta,
            spec.epsilon.map_or(String::new(), |e| e.to_string()),
            s.splits,
            s.lp_calls,
            t.par.as_secs_f64(),
            seq,
            csv_field(&detail)
        ),
    }
}

const VERIFY_CSV_HEADER: &str = "status,delta,eps,splits,lp_calls,time_s,seq_s,detail";

fn max_delta_line(r: &MaxDelta, elapsed: Duration, format: OutputFormat) -> String {
    match format {
        OutputFormat::Text => {
            let mut line = format!("MAX-DELTA delta={} probes={} splits={}", r.delta, r.probes, r.stats.splits);
            if r.timed_out {
                line.push_str(" flag=probe-timeout");
            }
            if r.never_robust {
                line.push_str(" flag=never-robust");
            }
            let _ = write!(line, " time={:.3}", elapsed.as_secs_f64());
            line
        }
        OutputFormat::Csv => format!(
            "max-delta,{},,{},{},{:.3},-,{}",
            r.delta,
            r.stats.splits,
            r.stats.lp_calls,
            elapsed.as_secs_f64(),
            match (r.timed_out, r.never_robust) {
                (true, true) => "probe-timeout never-robust",
                (true, false) => "probe-timeout",
                (false, true) => "never-robust",
                _ => "",
            }
        ),
    }
}

fn search(cfg: &RunConfig, net: &Arc<Network>, q: &MaxDeltaQuery, tally: &mut Tally) -> Result<String, CliError> {
    let t = Instant::now();
    let r = max_delta_parallel(net, q, &cfg.batch(cfg.workers))?;
    tally.timeout |= r.timed_out;
    Ok(max_delta_line(&r, t.elapsed(), cfg.format))
}

fn run_verify(cfg: &RunConfig, net: &Arc<Network>, lines: &[SpecLine]) -> Result<(i32, String), CliError> {
    let mut out = String::new();
    if cfg.format == OutputFormat::Csv {
        out.push_str(VERIFY_CSV_HEADER);
        out.push('\n');
    }
    let mut tally = Tally::default();
    for line in lines {
        let text = match line {
            SpecLine::Verify(spec) => {
                let t = check(cfg, net, spec)?;
                tally.violated |= t.verdict.is_violated();
                tally.timeout |= t.verdict.is_timeout();
                verdict_line(spec, &t, cfg.format)
            }
            SpecLine::MaxDelta(q) => search(cfg, net, q, &mut tally)?,
        };
        out.push_str(&text);
        out.push('\n');
    }
    Ok((tally.exit_code(), out))
}

fn run_max_delta(cfg: &RunConfig, net: &Arc<Network>, lines: &[SpecLine]) -> Result<(i32, String), CliError> {
    let mut out = String::new();
    if cfg.format == OutputFormat::Csv {
        out.push_str(VERIFY_CSV_HEADER);
        out.push('\n');
    }
    let mut tally = Tally::default();
    for line in lines {
        let q = match line {
            SpecLine::MaxDelta(q) => q.clone(),
            SpecLine::Verify(spec) => {
                let kind = match spec.kind {
                    PropertyKind::LocalLabel => SearchKind::Label,
                    PropertyKind::LocalConfidence => SearchKind::Confidence(spec.epsilon.unwrap_or_default()),
                    PropertyKind::GlobalConfidence => {
                        return Err(CliError::Usage("max-delta mode needs local properties".into()))
                    }
                };
                MaxDeltaQuery {
                    x0: spec.x0.clone().unwrap_or_default(),
                    kind,
                    norm: spec.norm,
                    precision: spec.delta / 1024.0,
                    delta_hi: spec.delta,
                }
            }
        };
        out.push_str(&search(cfg, net, &q, &mut tally)?);
        out.push('\n');
    }
    Ok((tally.exit_code(), out))
}

fn run_table(
    cfg: &RunConfig,
    net: &Arc<Network>,
    lines: &[SpecLine],
    err: &mut dyn Write,
) -> Result<(i32, String), CliError> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut epsilons: Vec<f64> = Vec::new();
    let mut tally = Tally::default();
    for line in lines {
        let spec = match line {
            SpecLine::Verify(s) if s.kind == PropertyKind::LocalConfidence => s,
            _ => return Err(CliError::Usage("report-table mode needs local-conf lines only".into())),
        };
        let x0 = spec.x0.clone().unwrap_or_default();
        let eps = spec.epsilon.unwrap_or_default();
        let idx = match points.iter().position(|p| *p == x0) {
            Some(i) => i,
            None => {
                points.push(x0);
                rows.push(ReportRow { point: points.len(), cells: Vec::new() });
                points.len() - 1
            }
        };
        let t = check(cfg, net, spec)?;
        let robust = match t.verdict.outcome {
            PropertyOutcome::Robust => Robust::Yes,
            PropertyOutcome::Violated(_) => Robust::No,
            PropertyOutcome::Timeout(_) => Robust::Timeout,
        };
        tally.violated |= robust == Robust::No;
        tally.timeout |= robust == Robust::Timeout;
        rows[idx].cells.push(ReportCell {
            eps,
            robust,
            par_s: Some(t.par.as_secs_f64()),
            seq_s: t.seq.map(|d| d.as_secs_f64()),
        });
        if !epsilons.contains(&eps) {
            epsilons.push(eps);
        }
    }
    epsilons.sort_by(f64::total_cmp);
    for w in monotonicity_warnings(&rows) {
        let _ = writeln!(err, "warning: {w}");
    }
    let format = match cfg.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Csv => Format::Csv,
    };
    Ok((tally.exit_code(), emit_table(&rows, &epsilons, format, 3)))
}
