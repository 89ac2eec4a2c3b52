//! The candidate beta grid and the refresh rule.
//!
//! The refresh count `R = (1 - beta) * T` is the number of times balanced
//! Adam turns over its statistics during a horizon of `T` steps. The rule
//! targets a fixed `R0`, giving `beta_ref = 1 - R0 / T`, and then snaps
//! `beta_ref` to the nearest grid value.

use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_R0: f64 = 1000.0;
pub const CANONICAL_GRID_SIZE: usize = 13;

/// Strictly increasing beta values in `[0, 1)`.
///
/// Values are kept at full precision; [`BetaGrid::label`] is for display only.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaGrid {
    values: Vec<f64>,
}

/// `beta_k = 1 - 10^(-k/4)` for `k = 0..=12`: `1 - beta` is log-uniform over
/// three decades, from 0 up to 0.999.
pub fn build_grid() -> BetaGrid {
    let values = (0..CANONICAL_GRID_SIZE)
        .map(|k| 1.0 - 10f64.powf(-(k as f64) / 4.0))
        .collect();
    BetaGrid { values }
}

/// `0` stays `0`; everything else gets three decimals.
pub fn beta_label(beta: f64) -> String {
    if beta == 0.0 {
        "0".to_string()
    } else {
        format!("{beta:.3}")
    }
}

impl BetaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("beta grid is empty"));
        }
        if values.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::config("grid values must lie in [0, 1)"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("grid values must be strictly increasing"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn label(&self, index: usize) -> String {
        beta_label(self.values[index])
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Index of the grid value equal to `beta` up to `tol`.
    pub fn index_of(&self, beta: f64, tol: f64) -> Option<usize> {
        self.values.iter().position(|v| (v - beta).abs() <= tol)
    }

    /// Index of the grid value closest to `beta_ref` in raw beta distance.
    /// Exact ties go to the smaller value.
    pub fn project(&self, beta_ref: f64) -> usize {
        let mut best = 0;
        let mut best_dist = (self.values[0] - beta_ref).abs();
        for (i, v) in self.values.iter().enumerate().skip(1) {
            let dist = (v - beta_ref).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }
}

pub fn project_to_grid(beta_ref: f64, grid: &BetaGrid) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_ref) {
        return Err(Error::domain(format!("beta_ref must lie in [0, 1), got {beta_ref}")));
    }
    Ok(grid.value(grid.project(beta_ref)))
}

fn check_r0(r0: f64) -> Result<()> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::domain(format!("R0 must be positive, got {r0}")));
    }
    Ok(())
}

fn check_t(t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::domain("horizon must be at least one step"));
    }
    Ok(())
}

/// `(1 - beta) * T`.
pub fn refresh_count(beta: f64, t: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    check_t(t)?;
    Ok((1.0 - beta) * t as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshBeta {
    pub beta: f64,
    /// `R0 >= T`: the raw value was not positive and has been set to 0.
    pub clamped: bool,
}

/// `1 - R0 / T`, clamped at 0.
pub fn refresh_beta(r0: f64, t: u64) -> Result<RefreshBeta> {
    check_r0(r0)?;
    check_t(t)?;
    let raw = 1.0 - r0 / t as f64;
    Ok(if raw <= 0.0 {
        RefreshBeta {
            beta: 0.0,
            clamped: true,
        }
    } else {
        RefreshBeta {
            beta: raw,
            clamped: false,
        }
    })
}

/// How stability interval endpoints are turned into integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntervalConvention {
    /// The exact set of integer horizons that keep the selection: grid values
    /// at full precision, endpoints checked against the projection itself.
    /// Adjacent intervals are disjoint.
    Exact,
    /// Boundary horizons computed from grid values quoted to five decimals and
    /// rounded to the nearest step. Adjacent intervals share their endpoint.
    /// This reproduces the commonly quoted interval endpoints.
    #[default]
    Reported,
}

/// Horizons `T` for which the rule keeps selecting the same grid value.
/// `None` marks an open side (the first or last grid value).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityInterval {
    pub lower: Option<u64>,
    pub upper: Option<u64>,
}

impl StabilityInterval {
    /// `(upper - lower) / lower`, when both sides are closed.
    pub fn relative_width(&self) -> Option<f64> {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) if lo > 0 => Some((hi as f64 - lo as f64) / lo as f64),
            _ => None,
        }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.lower.is_none_or(|lo| t >= lo) && self.upper.is_none_or(|hi| t <= hi)
    }
}

impl fmt::Display for StabilityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = self.lower.map_or_else(|| "-".to_string(), |v| v.to_string());
        let hi = self.upper.map_or_else(|| "inf".to_string(), |v| v.to_string());
        write!(f, "[{lo}, {hi}]")
    }
}

fn round5(x: f64) -> f64 {
    (x * 1e5).round() / 1e5
}

fn selected_index(grid: &BetaGrid, r0: f64, t: u64) -> usize {
    let beta_ref = (1.0 - r0 / t as f64).max(0.0);
    grid.project(beta_ref)
}

pub fn stability_interval(
    grid: &BetaGrid,
    index: usize,
    r0: f64,
    convention: IntervalConvention,
) -> Result<StabilityInterval> {
    check_r0(r0)?;
    if index >= grid.len() {
        return Err(Error::domain(format!(
            "grid index {index} out of range (grid has {} values)",
            grid.len()
        )));
    }
    let v = grid.values();
    let boundary = |a: f64, b: f64| r0 / (1.0 - 0.5 * (a + b));

    let (lower, upper) = match convention {
        IntervalConvention::Reported => {
            let lower = (index > 0).then(|| boundary(round5(v[index - 1]), round5(v[index])).round() as u64);
            let upper = (index + 1 < v.len())
                .then(|| boundary(round5(v[index]), round5(v[index + 1])).round() as u64);
            (lower, upper)
        }
        IntervalConvention::Exact => {
            let lower = (index > 0).then(|| {
                // Smallest T with selection >= index.
                let mut t = (boundary(v[index - 1], v[index]).floor() as u64 + 1).max(1);
                while t > 1 && selected_index(grid, r0, t - 1) >= index {
                    t -= 1;
                }
                while selected_index(grid, r0, t) < index {
                    t += 1;
                }
                t
            });
            let upper = (index + 1 < v.len()).then(|| {
                // Largest T with selection <= index.
                let mut t = (boundary(v[index], v[index + 1]).floor() as u64).max(1);
                while selected_index(grid, r0, t + 1) <= index {
                    t += 1;
                }
                while t > 1 && selected_index(grid, r0, t) > index {
                    t -= 1;
                }
                t
            });
            (lower, upper)
        }
    };
    Ok(StabilityInterval { lower, upper })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefreshRule {
    pub r0: f64,
    pub grid: BetaGrid,
    pub convention: IntervalConvention,
}

impl RefreshRule {
    pub fn new(r0: f64, grid: BetaGrid) -> Result<Self> {
        check_r0(r0)?;
        Ok(Self {
            r0,
            grid,
            convention: IntervalConvention::default(),
        })
    }

    pub fn with_convention(mut self, convention: IntervalConvention) -> Self {
        self.convention = convention;
        self
    }
}

impl Default for RefreshRule {
    fn default() -> Self {
        Self {
            r0: DEFAULT_R0,
            grid: build_grid(),
            convention: IntervalConvention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub beta: f64,
    pub label: String,
    pub beta_ref: f64,
    pub clamped: bool,
    /// `(1 - beta) * T_ES` for the selected grid value.
    pub refresh_count: f64,
    pub interval: StabilityInterval,
}

/// Refresh-rule beta for a horizon: `project(1 - R0 / T_ES)`.
pub fn select_beta(rule: &RefreshRule, t_es: u64) -> Result<Selection> {
    let reference = refresh_beta(rule.r0, t_es)?;
    let index = rule.grid.project(reference.beta);
    let beta = rule.grid.value(index);
    Ok(Selection {
        index,
        beta,
        label: rule.grid.label(index),
        beta_ref: reference.beta,
        clamped: reference.clamped,
        refresh_count: refresh_count(beta, t_es)?,
        interval: stability_interval(&rule.grid, index, rule.r0, rule.convention)?,
    })
}

/// Grid index the rule picks, without diagnostics.
pub fn select_index(grid: &BetaGrid, r0: f64, t_es: u64) -> Result<usize> {
    check_r0(r0)?;
    check_t(t_es)?;
    Ok(selected_index(grid, r0, t_es))
}
