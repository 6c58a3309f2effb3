//! CSV tables, JSON summaries and plain-text reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Floats carry 17 significant digits so they round-trip exactly.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn render(&self, digest: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# config-digest: sha256:{digest}").unwrap();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }
}

/// A single pass/fail check: `value` compared against `bound`.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

impl Assertion {
    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: value <= bound, value, bound, detail: "value <= bound".into() }
    }

    /// `value ≥ bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), passed: value >= bound, value, bound, detail: "value >= bound".into() }
    }

    /// A boolean check; `value` is 1 for pass.
    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: ok, value: if ok { 1.0 } else { 0.0 }, bound: 1.0, detail: detail.into() }
    }
}

/// Result of one experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: &'static str,
    pub assertions: Vec<Assertion>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn new(experiment: &'static str) -> Self {
        Self { experiment, assertions: Vec::new(), tables: Vec::new(), notes: Vec::new() }
    }

    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    experiment: &'a str,
    config_digest: &'a str,
    passed: bool,
    elapsed_seconds: f64,
    assertions: &'a [Assertion],
    notes: &'a [String],
}

/// Human-readable report for one experiment.
pub fn report_text(o: &Outcome, elapsed: f64) -> String {
    let mut s = String::new();
    let status = if o.passed() { "PASS" } else { "FAIL" };
    writeln!(s, "== {} [{status}] ({elapsed:.1} s)", o.experiment).unwrap();
    for a in &o.assertions {
        let mark = if a.passed { "ok  " } else { "FAIL" };
        writeln!(s, "  {mark} {:<40} value {:>12.5e}  bound {:>12.5e}  ({})", a.name, a.value, a.bound, a.detail).unwrap();
    }
    for n in &o.notes {
        writeln!(s, "  note: {n}").unwrap();
    }
    s
}

/// Writes `<dir>/<table>.csv`, `<dir>/summary.json` and `<dir>/report.txt`.
pub fn write_outcome(dir: &Path, o: &Outcome, digest: &str, elapsed: f64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &o.tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.render(digest)).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = SummaryJson {
        experiment: o.experiment,
        config_digest: digest,
        passed: o.passed(),
        elapsed_seconds: elapsed,
        assertions: &o.assertions,
        notes: &o.notes,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("report.txt"), report_text(o, elapsed))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![1usize.into(), 0.5.into()]);
        let text = t.render("abc");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config-digest: sha256:abc");
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1,5.0000000000000000e-1");
    }

    #[test]
    fn assertion_directions() {
        assert!(Assertion::at_most("a", 1.0, 1.0).passed);
        assert!(!Assertion::at_most("a", 1.0 + 1e-12, 1.0).passed);
        assert!(Assertion::at_least("a", 2.0, 1.0).passed);
        assert!(!Assertion::at_most("a", f64::NAN, 1.0).passed);
    }
}
