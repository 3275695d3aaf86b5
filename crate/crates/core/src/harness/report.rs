//! Experiment reports and their CSV and plot-script forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::stats::{mean, std_err};

/// One result row: a method, a seed and a grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: String,
    pub seed: u64,
    pub cell: String,
    pub values: Vec<f64>,
}

/// A named condition checked after a run. Only failed `hard` checks make
/// the run fail; the others are reported trends.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub hard: bool,
    pub held: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    /// Resolved configuration, one TOML line per entry.
    pub echo: Vec<String>,
    /// Metric columns after `method,seed,cell`.
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Free-form result lines (fits, oracle values).
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

/// Mean and standard error of one metric column over the seeds of a
/// `(method, cell)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: String,
    pub cell: String,
    pub means: Vec<f64>,
    pub std_errs: Vec<f64>,
}

impl ExperimentReport {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, method: &str, seed: u64, cell: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(Row {
            method: method.into(),
            seed,
            cell: cell.into(),
            values,
        });
    }

    pub fn check(&mut self, name: &str, hard: bool, held: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            hard,
            held,
            detail: detail.into(),
        });
    }

    /// True when every hard check held.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.held || !c.hard)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of `column` for `method` in `cell`, in row order.
    pub fn values(&self, method: &str, cell: &str, column: &str) -> Vec<f64> {
        let Some(k) = self.column(column) else { return Vec::new() };
        self.rows
            .iter()
            .filter(|r| r.method == method && r.cell == cell)
            .map(|r| r.values[k])
            .collect()
    }

    /// Groups in first-appearance order.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            let key = (r.method.as_str(), r.cell.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(method, cell)| {
                let group: Vec<&Row> = self.rows.iter().filter(|r| r.method == method && r.cell == cell).collect();
                let col = |k: usize| group.iter().map(|r| r.values[k]).collect::<Vec<_>>();
                Summary {
                    method: method.into(),
                    cell: cell.into(),
                    means: (0..self.columns.len()).map(|k| mean(&col(k))).collect(),
                    std_errs: (0..self.columns.len()).map(|k| std_err(&col(k))).collect(),
                }
            })
            .collect()
    }

    /// The CSV text: comment lines (config echo, notes, checks), the
    /// header, per-seed rows in order, then `mean` and `stderr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in &self.echo {
            let _ = writeln!(out, "# {line}");
        }
        for line in &self.notes {
            let _ = writeln!(out, "# {line}");
        }
        for c in &self.checks {
            let status = if c.held { "held" } else { "FAILED" };
            let kind = if c.hard { "invariant" } else { "check" };
            let _ = writeln!(out, "# {kind} {status} {}: {}", c.name, c.detail);
        }
        out.push_str("method,seed,cell");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        let fmt_row = |out: &mut String, method: &str, seed: &str, cell: &str, vals: &[f64]| {
            let _ = write!(out, "{method},{seed},{cell}");
            for v in vals {
                let _ = write!(out, ",{v:.8e}");
            }
            out.push('\n');
        };
        for r in &self.rows {
            fmt_row(&mut out, &r.method, &r.seed.to_string(), &r.cell, &r.values);
        }
        for s in self.summaries() {
            fmt_row(&mut out, &s.method, "mean", &s.cell, &s.means);
            fmt_row(&mut out, &s.method, "stderr", &s.cell, &s.std_errs);
        }
        out
    }

    /// A plain-text plotting recipe naming the CSV columns.
    pub fn plot_script(&self, csv: &Path) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# plot recipe for {}", csv.display());
        let _ = writeln!(out, "data = {}", csv.display());
        let _ = writeln!(out, "skip_lines_starting_with = #");
        let _ = writeln!(out, "group_by = method");
        let _ = writeln!(out, "x = cell");
        for (k, c) in self.columns.iter().enumerate() {
            let _ = writeln!(out, "y{} = {c} (column {})", k + 1, k + 4);
        }
        let _ = writeln!(out, "points = rows whose seed is a number");
        let _ = writeln!(out, "line = rows whose seed is mean");
        let _ = writeln!(out, "error_bars = rows whose seed is stderr");
        out
    }
}

/// Path of the plot script written next to `csv`.
pub fn plot_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".plot.txt");
    PathBuf::from(s)
}

/// Writes the CSV to `path` and the plot script next to it, replacing
/// both.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, report.to_csv())?;
    std::fs::write(plot_path(path), report.plot_script(path))?;
    Ok(())
}
