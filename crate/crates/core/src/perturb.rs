//! Robustness of the refresh rule to a misestimated horizon.
//!
//! Each experiment's horizon is replaced by `T' = round(T_ES * (1 + eps))`
//! with `eps ~ N(0, sigma)`, the rule is re-applied, and the gap of the newly
//! selected beta is looked up in the experiment's sweep.
//!
//! Every draw has its own ChaCha8 stream, seeded from the SHA-256 digest of
//! `(base_seed, experiment_id, sigma index, draw index)`. Draws therefore do
//! not depend on the order of the experiments and are never shared between
//! noise levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use sha2::{Digest, Sha256};

use crate::betagrid::{select_index, BetaGrid, DEFAULT_R0};
use crate::error::{Error, Result};
use crate::harness::{ExperimentRecord, SplitTag};
use crate::metrics::{fixed_report, gap_for, refresh_report, SubsetSummary};

pub const DEFAULT_DRAWS: usize = 20;
pub const DEFAULT_SIGMAS: [f64; 7] = [0.0, 0.03, 0.06, 0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub sigmas: Vec<f64>,
    pub draws_per_experiment: usize,
    pub base_seed: u64,
    pub r0: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            draws_per_experiment: DEFAULT_DRAWS,
            base_seed: 0,
            r0: DEFAULT_R0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("noise levels must be finite and >= 0"));
        }
        if self.sigmas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("noise levels must be sorted ascending"));
        }
        if self.draws_per_experiment == 0 {
            return Err(Error::config("draws per experiment must be positive"));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::config("R0 must be positive"));
        }
        Ok(())
    }
}

/// `round(T * (1 + eps))`, never below one step.
pub fn perturb_with_eps(t: u64, eps: f64) -> u64 {
    let scaled = (t as f64 * (1.0 + eps)).round();
    if scaled.is_nan() || scaled < 1.0 {
        1
    } else {
        scaled as u64
    }
}

/// Draws `eps ~ N(0, sigma)` from `rng` and perturbs `t`.
pub fn perturb_t<R: Rng + ?Sized>(t: u64, sigma: f64, rng: &mut R) -> Result<u64> {
    if t == 0 {
        return Err(Error::domain("horizon must be at least one step"));
    }
    if sigma == 0.0 {
        return Ok(t);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string()))?;
    Ok(perturb_with_eps(t, rng.sample(normal)))
}

/// Independent stream for one (experiment, noise level, draw) triple.
pub fn draw_rng(base_seed: u64, experiment_id: &str, sigma_index: usize, draw_index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((experiment_id.len() as u64).to_le_bytes());
    h.update(experiment_id.as_bytes());
    h.update((sigma_index as u64).to_le_bytes());
    h.update((draw_index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub label: String,
    pub sigma: Option<f64>,
    /// Evaluations that entered the summary.
    pub evaluations: usize,
    /// Evaluations whose selected beta had no recorded loss.
    pub infeasible: usize,
    pub summary: SubsetSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessStudy {
    pub rows: Vec<RobustnessRow>,
    pub config: PerturbConfig,
}

/// One row per noise level, preceded by a fixed-beta baseline row when
/// `fixed_beta` is given.
///
/// The `sigma = 0` row uses one evaluation per experiment and is built from
/// the same gaps as the unperturbed refresh report.
pub fn robustness_study(
    records: &[ExperimentRecord],
    grid: &BetaGrid,
    config: &PerturbConfig,
    fixed_beta: Option<f64>,
    threshold: f64,
) -> Result<RobustnessStudy> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InsufficientData("no experiment records".into()));
    }
    let mut rows = Vec::with_capacity(config.sigmas.len() + 1);

    if let Some(beta) = fixed_beta {
        let report = fixed_report(records, beta, threshold)?;
        rows.push(RobustnessRow {
            label: report.label.clone(),
            sigma: None,
            evaluations: report.per_experiment.len(),
            infeasible: records.len() - report.per_experiment.len(),
            summary: report.summary,
        });
    }

    for (sigma_index, &sigma) in config.sigmas.iter().enumerate() {
        if sigma == 0.0 {
            let report = refresh_report(records, grid, config.r0, threshold)?;
            rows.push(RobustnessRow {
                label: "sigma=0".into(),
                sigma: Some(0.0),
                evaluations: report.per_experiment.len(),
                infeasible: records.len() - report.per_experiment.len(),
                summary: report.summary,
            });
            continue;
        }
        let mut values: Vec<(SplitTag, f64)> = Vec::with_capacity(records.len() * config.draws_per_experiment);
        let mut infeasible = 0;
        for record in records {
            for draw in 0..config.draws_per_experiment {
                let mut rng = draw_rng(config.base_seed, &record.experiment_id, sigma_index, draw);
                let t = perturb_t(record.t_es, sigma, &mut rng)?;
                let beta = grid.value(select_index(grid, config.r0, t)?);
                match gap_for(record, beta)? {
                    Some(gap) => values.push((record.split, gap)),
                    None => infeasible += 1,
                }
            }
        }
        rows.push(RobustnessRow {
            label: format!("sigma={sigma}"),
            sigma: Some(sigma),
            evaluations: values.len(),
            infeasible,
            summary: SubsetSummary::from_values(&values, threshold)?,
        });
    }
    Ok(RobustnessStudy {
        rows,
        config: config.clone(),
    })
}
