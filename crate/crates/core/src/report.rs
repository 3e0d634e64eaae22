//! Robustness tables: a text layout with one column group per ε, and long-form CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Robust {
    Yes,
    No,
    Timeout,
}

impl Robust {
    fn table_word(self) -> &'static str {
        match self {
            Robust::Yes => "Yes",
            Robust::No => "No",
            Robust::Timeout => "Timeout",
        }
    }

    fn csv_word(self) -> &'static str {
        match self {
            Robust::Yes => "yes",
            Robust::No => "no",
            Robust::Timeout => "timeout",
        }
    }
}

impl FromStr for Robust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "yes" => Ok(Robust::Yes),
            "no" => Ok(Robust::No),
            "timeout" => Ok(Robust::Timeout),
            _ => Err(Error::InvalidProperty(format!("unknown robustness value {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub eps: f64,
    pub robust: Robust,
    /// Seconds; `None` renders as `-`.
    pub par_s: Option<f64>,
    pub seq_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub point: usize,
    pub cells: Vec<ReportCell>,
}

impl ReportRow {
    pub fn cell(&self, eps: f64) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.eps == eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::InvalidProperty(format!("unknown format {s:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "point,eps,robust,par_s,seq_s";

fn time(t: Option<f64>, decimals: usize) -> String {
    t.map_or_else(|| "-".to_string(), |t| format!("{t:.decimals$}"))
}

/// Renders `rows` with one column group per entry of `epsilons`.
/// Missing cells print as `-`.
pub fn emit_table(rows: &[ReportRow], epsilons: &[f64], format: Format, decimals: usize) -> String {
    match format {
        Format::Text => emit_text(rows, epsilons, decimals),
        Format::Csv => emit_csv(rows, epsilons, decimals),
    }
}

fn emit_csv(rows: &[ReportRow], epsilons: &[f64], decimals: usize) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        for &eps in epsilons {
            if let Some(c) = row.cell(eps) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    row.point,
                    eps,
                    c.robust.csv_word(),
                    time(c.par_s, decimals),
                    time(c.seq_s, decimals)
                );
            }
        }
    }
    out
}

fn emit_text(rows: &[ReportRow], epsilons: &[f64], decimals: usize) -> String {
    const SUB: [&str; 3] = ["Robust?", "Par.", "Seq."];
    let body: Vec<(String, Vec<[String; 3]>)> = rows
        .iter()
        .map(|r| {
            let cells = epsilons
                .iter()
                .map(|&e| match r.cell(e) {
                    Some(c) => [c.robust.table_word().to_string(), time(c.par_s, decimals), time(c.seq_s, decimals)],
                    None => ["-".into(), "-".into(), "-".into()],
                })
                .collect();
            (r.point.to_string(), cells)
        })
        .collect();

    let point_w = body.iter().map(|(p, _)| p.len()).fold("Point".len(), usize::max);
    let widths: Vec<[usize; 3]> = (0..epsilons.len())
        .map(|g| {
            let mut w = SUB.map(str::len);
            for (_, cells) in &body {
                for k in 0..3 {
                    w[k] = w[k].max(cells[g][k].len());
                }
            }
            w
        })
        .collect();
    let titles: Vec<String> = epsilons.iter().map(|e| format!("eps = {e}")).collect();
    let group_w: Vec<usize> =
        widths.iter().zip(&titles).map(|(w, t)| (w[0] + w[1] + w[2] + 4).max(t.len())).collect();

    let group = |cells: [&str; 3], g: usize| {
        let w = widths[g];
        let s = format!("{:<a$}  {:>b$}  {:>c$}", cells[0], cells[1], cells[2], a = w[0], b = w[1], c = w[2]);
        format!("{s:>0$}", group_w[g])
    };
    let mut lines = Vec::with_capacity(rows.len() + 3);
    let mut head = format!("{:<point_w$}", "Point");
    let mut sub = " ".repeat(point_w);
    let mut rule = "-".repeat(point_w);
    for g in 0..epsilons.len() {
        let _ = write!(head, " | {:<1$}", titles[g], group_w[g]);
        let _ = write!(sub, " | {}", group(SUB, g));
        let _ = write!(rule, "-+-{}", "-".repeat(group_w[g]));
    }
    lines.extend([head, sub, rule]);
    for (p, cells) in &body {
        let mut line = format!("{p:<point_w$}");
        for (g, c) in cells.iter().enumerate() {
            let _ = write!(line, " | {}", group([&c[0], &c[1], &c[2]], g));
        }
        lines.push(line);
    }
    let mut out = String::new();
    for l in lines {
        out.push_str(l.trim_end());
        out.push('\n');
    }
    out
}

/// Parses long-form CSV back into rows, keeping first-appearance order.
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((i, _)) => return Err(Error::Parse { line: i + 1, msg: format!("expected header {CSV_HEADER}") }),
        None => return Ok(Vec::new()),
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    for (i, line) in lines {
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let point: usize = f[0].parse().map_err(|e| err(format!("bad point: {e}")))?;
        let eps: f64 = f[1].parse().map_err(|e| err(format!("bad eps: {e}")))?;
        let robust = f[2].parse().map_err(|e: Error| err(e.to_string()))?;
        let t = |s: &str| -> Result<Option<f64>> {
            if s == "-" {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|e| err(format!("bad time {s:?}: {e}")))
        };
        let cell = ReportCell { eps, robust, par_s: t(f[3])?, seq_s: t(f[4])? };
        match rows.iter_mut().find(|r| r.point == point) {
            Some(r) => r.cells.push(cell),
            None => rows.push(ReportRow { point, cells: vec![cell] }),
        }
    }
    Ok(rows)
}

/// Rows where a larger ε is reported non-robust after a smaller ε was robust.
pub fn monotonicity_warnings(rows: &[ReportRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        let mut cells: Vec<&ReportCell> = r.cells.iter().collect();
        cells.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                if a.robust == Robust::Yes && b.robust == Robust::No {
                    out.push(format!(
                        "point {}: robust at eps={} but not at larger eps={}",
                        r.point, a.eps, b.eps
                    ));
                }
            }
        }
    }
    out
}
