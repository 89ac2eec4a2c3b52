//! Tables for the command line.
//!
//! Each report is first built as a [`Table`] and then rendered either as
//! aligned text or as CSV, so both outputs always show the same numbers.
//! Text cells are rounded for display; CSV cells keep full precision.

use std::fmt::Write as _;

use crate::betagrid::{beta_label, BetaGrid, Selection};
use crate::error::{Error, Result};
use crate::harness::ExperimentRecord;
use crate::metrics::{Calibration, GapReport, SubsetStats, SubsetSummary};
use crate::optim::effective_horizon;
use crate::perturb::RobustnessStudy;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Value and number of decimals for the text form.
    Num(f64, usize),
    /// A fraction shown as a percentage with three decimals.
    Percent(f64),
    Empty,
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x, d) => format!("{x:.d$}"),
            Cell::Percent(x) => format!("{:.3}", 100.0 * x),
            Cell::Empty => "-".into(),
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x, _) => format!("{x:?}"),
            Cell::Percent(x) => format!("{:?}", 100.0 * x),
            Cell::Empty => String::new(),
        }
    }

    fn is_text(&self) -> bool {
        matches!(self, Cell::Text(_))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Lines printed under the text table only.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(title: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let header: Vec<String> = self
            .headers
            .iter()
            .zip(&widths)
            .map(|(h, w)| format!("{h:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", header.join("  ").trim_end());
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for (row, raw) in cells.iter().zip(&self.rows) {
            let line: Vec<String> = row
                .iter()
                .zip(raw)
                .zip(&widths)
                .map(|((c, r), w)| if r.is_text() { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        for note in &self.notes {
            let _ = writeln!(out, "{note}");
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::config(e.to_string());
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::config(e.to_string()))
    }
}

pub fn grid_table(grid: &BetaGrid) -> Table {
    let mut t = Table::new("Beta grid", &["k", "label", "beta", "horizon"]);
    for (k, &b) in grid.values().iter().enumerate() {
        t.push(vec![
            Cell::Int(k as u64),
            beta_label(b).into(),
            Cell::Num(b, 12),
            Cell::Num(effective_horizon(b).unwrap_or(f64::NAN), 1),
        ]);
    }
    t
}

pub fn selection_table(t_es: u64, r0: f64, sel: &Selection) -> Table {
    let mut t = Table::new(
        "Refresh-rule selection",
        &["T_ES", "R0", "beta", "exact", "beta_ref", "clamped", "refresh_count", "interval"],
    );
    t.push(vec![
        Cell::Int(t_es),
        Cell::Num(r0, 0),
        sel.label.clone().into(),
        Cell::Num(sel.beta, 12),
        Cell::Num(sel.beta_ref, 6),
        (if sel.clamped { "yes" } else { "no" }).into(),
        Cell::Num(sel.refresh_count, 1),
        sel.interval.to_string().into(),
    ]);
    if sel.clamped {
        t.notes.push("R0 >= T_ES: beta_ref clamped to 0".to_string());
    }
    t
}

fn stats_cells(s: Option<SubsetStats>, with_cvar: bool) -> Vec<Cell> {
    let mut cells = match s {
        Some(s) => vec![Cell::Percent(s.mean), Cell::Percent(s.max)],
        None => vec![Cell::Empty, Cell::Empty],
    };
    if with_cvar {
        cells.push(s.map_or(Cell::Empty, |s| Cell::Percent(s.cvar)));
    }
    cells
}

const SUMMARY_HEADERS: [&str; 9] = [
    "dev_mean", "dev_max", "dev_cvar", "held_mean", "held_max", "all_mean", "all_max", "all_cvar", "gap<1%",
];

fn summary_cells(s: &SubsetSummary) -> Vec<Cell> {
    let mut cells = stats_cells(s.development, true);
    cells.extend(stats_cells(s.held_out, false));
    cells.extend(stats_cells(s.global, true));
    cells.push(match s.global {
        Some(g) => format!("{}/{}", g.below, g.count).into(),
        None => Cell::Empty,
    });
    cells
}

/// One row per method with split summaries, gaps in percent.
pub fn gap_summary_table(reports: &[&GapReport]) -> Table {
    let mut headers = vec!["method"];
    headers.extend(SUMMARY_HEADERS);
    let mut t = Table::new("Relative gap to the per-experiment oracle (%)", &headers);
    for r in reports {
        let mut row = vec![Cell::from(r.label.as_str())];
        row.extend(summary_cells(&r.summary));
        t.push(row);
        t.notes.extend(r.warnings.iter().map(|w| format!("warning ({}): {w}", r.label)));
    }
    t
}

pub fn gap_detail_table(report: &GapReport) -> Table {
    let mut t = Table::new(format!("{}: per experiment", report.label), &["experiment", "split", "beta", "gap_%"]);
    for g in &report.per_experiment {
        t.push(vec![
            g.experiment_id.as_str().into(),
            g.split.to_string().into(),
            beta_label(g.beta).into(),
            Cell::Percent(g.gap),
        ]);
    }
    t
}

pub fn calibration_table(cal: &Calibration) -> Table {
    let mut headers = vec!["R0"];
    headers.extend(SUMMARY_HEADERS);
    headers.push("selected");
    let mut t = Table::new("R0 calibration (gaps in %)", &headers);
    for row in &cal.rows {
        let mut cells = vec![Cell::Num(row.r0, 0)];
        match &row.report {
            Some(r) => cells.extend(summary_cells(&r.summary)),
            None => cells.extend((0..SUMMARY_HEADERS.len()).map(|_| Cell::Empty)),
        }
        cells.push((if row.r0 == cal.selected_r0 { "*" } else { "" }).into());
        t.push(cells);
    }
    t.notes.push(format!(
        "selected R0 = {} (smallest maximum development gap; ties to the smaller R0)",
        cal.selected_r0
    ));
    t
}

pub fn robustness_table(study: &RobustnessStudy) -> Table {
    let mut t = Table::new(
        "Robustness to horizon noise (gaps in %)",
        &["method", "evals", "infeasible", "mean", "max", "cvar", "dev_max", "held_max", "gap<1%_%"],
    );
    for row in &study.rows {
        let s = &row.summary;
        let mut cells = vec![Cell::from(row.label.as_str()), Cell::Int(row.evaluations as u64), Cell::Int(row.infeasible as u64)];
        cells.extend(stats_cells(s.global, true));
        cells.push(s.development.map_or(Cell::Empty, |d| Cell::Percent(d.max)));
        cells.push(s.held_out.map_or(Cell::Empty, |h| Cell::Percent(h.max)));
        cells.push(s.global.map_or(Cell::Empty, |g| Cell::Percent(g.frac_below())));
        t.push(cells);
    }
    t.notes.push(format!(
        "{} draws per experiment, base seed {}, R0 = {}",
        study.config.draws_per_experiment, study.config.base_seed, study.config.r0
    ));
    t
}

/// Display coordinate `-log10(1 - beta)`, with `u = 0` at `beta = 0`.
pub fn u_coordinate(beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        -(1.0 - beta).log10()
    }
}

pub fn plot_data_table(records: &[ExperimentRecord]) -> Table {
    let mut t = Table::new(
        "Sweep curves",
        &["experiment", "beta_label", "u", "mean_best_val_loss", "seed_spread"],
    );
    for r in records {
        for e in &r.entries {
            t.push(vec![
                r.experiment_id.as_str().into(),
                beta_label(e.beta).into(),
                Cell::Num(u_coordinate(e.beta), 4),
                Cell::Num(e.loss, 6),
                Cell::Num(e.seed_spread(), 6),
            ]);
        }
    }
    t
}

pub fn record_table(record: &ExperimentRecord) -> Table {
    let mut t = Table::new(
        format!(
            "{} ({}, {} steps, T_ES = {})",
            record.experiment_id, record.split, record.total_steps, record.t_es
        ),
        &["beta", "loss", "seeds", "stop_time"],
    );
    for e in &record.entries {
        t.push(vec![
            beta_label(e.beta).into(),
            Cell::Num(e.loss, 6),
            Cell::Int(e.seed_losses.len() as u64),
            e.stop_time.map_or(Cell::Empty, |s| Cell::Num(s, 1)),
        ]);
    }
    t
}
