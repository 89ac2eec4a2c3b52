//! Relative gaps to the per-experiment oracle and their aggregates.
//!
//! Gaps are fractions throughout; the text reports multiply by 100.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::betagrid::{select_index, BetaGrid};
use crate::error::{Error, Result};
use crate::harness::{ExperimentRecord, SplitTag};

pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_CVAR_ALPHA: f64 = 0.25;

/// Grid beta with the lowest loss; ties go to the smaller beta.
pub fn oracle_beta(record: &ExperimentRecord) -> Result<f64> {
    record
        .entries
        .iter()
        .filter(|e| e.loss.is_finite())
        .min_by(|a, b| {
            a.loss
                .partial_cmp(&b.loss)
                .unwrap_or(Ordering::Equal)
                .then(a.beta.partial_cmp(&b.beta).unwrap_or(Ordering::Equal))
        })
        .map(|e| e.beta)
        .ok_or_else(|| Error::NoOracle(record.experiment_id.clone()))
}

/// `(L_beta - L_star) / L_star`.
pub fn relative_gap(loss: f64, oracle_loss: f64) -> Result<f64> {
    if !(oracle_loss > 0.0 && oracle_loss.is_finite()) {
        return Err(Error::domain(format!("oracle loss must be positive, got {oracle_loss}")));
    }
    if loss.is_nan() {
        return Err(Error::NonFinite("loss"));
    }
    if loss < oracle_loss {
        return Err(Error::NegativeGap {
            loss,
            oracle: oracle_loss,
        });
    }
    Ok((loss - oracle_loss) / oracle_loss)
}

/// Mean of the `ceil(alpha * n)` largest values.
pub fn cvar(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("CVaR of an empty set"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("CVaR level must lie in (0, 1], got {alpha}")));
    }
    let n = values.len();
    // The epsilon keeps e.g. 0.25 * 8 from rounding up to 3.
    let k = ((alpha * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// `(before - after) / before`.
pub fn relative_reduction(before: f64, after: f64) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::domain(format!("reference value must be positive, got {before}")));
    }
    Ok((before - after) / before)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetStats {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub cvar: f64,
    /// Values strictly below the threshold.
    pub below: usize,
}

impl SubsetStats {
    pub fn frac_below(&self) -> f64 {
        self.below as f64 / self.count as f64
    }
}

pub fn summarize(values: &[f64], threshold: f64) -> Result<SubsetStats> {
    if values.is_empty() {
        return Err(Error::domain("cannot summarize an empty subset"));
    }
    Ok(SubsetStats {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        cvar: cvar(values, DEFAULT_CVAR_ALPHA)?,
        below: values.iter().filter(|v| **v < threshold).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGap {
    pub experiment_id: String,
    pub split: SplitTag,
    pub beta: f64,
    pub gap: f64,
}

/// Development, held-out and global summaries of one gap population.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSummary {
    pub development: Option<SubsetStats>,
    pub held_out: Option<SubsetStats>,
    pub global: Option<SubsetStats>,
}

impl SubsetSummary {
    pub fn from_values(values: &[(SplitTag, f64)], threshold: f64) -> Result<Self> {
        let pick = |tag: Option<SplitTag>| -> Result<Option<SubsetStats>> {
            let v: Vec<f64> = values
                .iter()
                .filter(|(t, _)| tag.is_none_or(|tag| *t == tag))
                .map(|(_, g)| *g)
                .collect();
            if v.is_empty() {
                Ok(None)
            } else {
                summarize(&v, threshold).map(Some)
            }
        };
        Ok(Self {
            development: pick(Some(SplitTag::Development))?,
            held_out: pick(Some(SplitTag::HeldOut))?,
            global: pick(None)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub label: String,
    pub per_experiment: Vec<ExperimentGap>,
    pub summary: SubsetSummary,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

pub fn aggregate(label: &str, gaps: Vec<ExperimentGap>, threshold: f64) -> Result<GapReport> {
    let mut seen = BTreeSet::new();
    for g in &gaps {
        if !seen.insert(g.experiment_id.as_str()) {
            return Err(Error::config(format!("experiment `{}` appears twice", g.experiment_id)));
        }
        if g.gap.is_nan() || g.gap < 0.0 {
            return Err(Error::domain(format!("invalid gap {} for `{}`", g.gap, g.experiment_id)));
        }
    }
    let values: Vec<(SplitTag, f64)> = gaps.iter().map(|g| (g.split, g.gap)).collect();
    let summary = SubsetSummary::from_values(&values, threshold)?;
    let mut warnings = Vec::new();
    if summary.development.is_none() {
        warnings.push("no development experiments; subset omitted".to_string());
    }
    if summary.held_out.is_none() {
        warnings.push("no held-out experiments; subset omitted".to_string());
    }
    Ok(GapReport {
        label: label.to_string(),
        per_experiment: gaps,
        summary,
        threshold,
        warnings,
    })
}

/// Gap of `beta` in `record`, or `None` if the record has no loss for it.
pub fn gap_for(record: &ExperimentRecord, beta: f64) -> Result<Option<f64>> {
    let star = oracle_beta(record)?;
    let oracle_loss = record.loss(star).expect("oracle beta comes from the record");
    match record.loss(beta) {
        Some(loss) => relative_gap(loss, oracle_loss).map(Some),
        None => Ok(None),
    }
}

fn report_with<F>(label: &str, records: &[ExperimentRecord], threshold: f64, mut choose: F) -> Result<GapReport>
where
    F: FnMut(&ExperimentRecord) -> Result<f64>,
{
    let mut gaps = Vec::with_capacity(records.len());
    let mut missing = Vec::new();
    for r in records {
        let beta = choose(r)?;
        match gap_for(r, beta)? {
            Some(gap) => gaps.push(ExperimentGap {
                experiment_id: r.experiment_id.clone(),
                split: r.split,
                beta,
                gap,
            }),
            None => missing.push(format!("{}: no loss recorded for beta {beta}", r.experiment_id)),
        }
    }
    let mut report = aggregate(label, gaps, threshold)?;
    report.warnings.extend(missing);
    Ok(report)
}

/// Gaps of the refresh rule with constant `r0`.
pub fn refresh_report(records: &[ExperimentRecord], grid: &BetaGrid, r0: f64, threshold: f64) -> Result<GapReport> {
    report_with(&format!("Refresh R0={r0}"), records, threshold, |r| {
        Ok(grid.value(select_index(grid, r0, r.t_es)?))
    })
}

/// Gaps of one fixed beta applied to every experiment.
pub fn fixed_report(records: &[ExperimentRecord], beta: f64, threshold: f64) -> Result<GapReport> {
    report_with(&format!("Fixed beta={beta:.3}"), records, threshold, |_| Ok(beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub r0: f64,
    /// `None` when some development record lacks the selected beta.
    pub report: Option<GapReport>,
    /// Selected beta per record, in input order.
    pub selections: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub rows: Vec<CalibrationRow>,
    pub selected_r0: f64,
}

impl Calibration {
    pub fn selected(&self) -> &CalibrationRow {
        self.rows
            .iter()
            .find(|r| r.r0 == self.selected_r0)
            .expect("selected candidate is one of the rows")
    }
}

/// `300, 400, ..., 2000`.
pub fn default_r0_candidates() -> Vec<f64> {
    (3..=20).map(|k| k as f64 * 100.0).collect()
}

/// Picks the `R0` minimizing the maximum development gap.
///
/// Held-out records are reported for every candidate but never enter the
/// choice. Ties go to the smallest `R0`.
pub fn calibrate_r0(
    records: &[ExperimentRecord],
    grid: &BetaGrid,
    candidates: &[f64],
    threshold: f64,
) -> Result<Calibration> {
    if candidates.is_empty() {
        return Err(Error::config("no R0 candidates"));
    }
    if !records.iter().any(|r| r.split == SplitTag::Development) {
        return Err(Error::InsufficientData("calibration needs development records".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for &r0 in candidates {
        let selections = records
            .iter()
            .map(|r| select_index(grid, r0, r.t_es).map(|i| grid.value(i)))
            .collect::<Result<Vec<_>>>()?;
        let dev_feasible = records
            .iter()
            .zip(&selections)
            .filter(|(r, _)| r.split == SplitTag::Development)
            .all(|(r, b)| r.loss(*b).is_some());
        let report = if dev_feasible {
            Some(refresh_report(records, grid, r0, threshold)?)
        } else {
            None
        };
        rows.push(CalibrationRow { r0, report, selections });
    }

    let mut best: Option<(f64, f64)> = None;
    for row in &rows {
        let Some(dev) = row.report.as_ref().and_then(|r| r.summary.development) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((max, r0)) => dev.max < max || (dev.max == max && row.r0 < r0),
        };
        if better {
            best = Some((dev.max, row.r0));
        }
    }
    let (_, selected_r0) = best.ok_or_else(|| Error::InsufficientData("every R0 candidate is infeasible".into()))?;
    Ok(Calibration { rows, selected_r0 })
}
