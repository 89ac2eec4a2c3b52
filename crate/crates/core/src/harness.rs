//! Training loop and beta sweeps over the toy tasks.
//!
//! A sweep runs the first seed for every grid beta, reruns the `k` best betas
//! (ranked by that first seed) with extra seeds, and condenses everything into
//! an [`ExperimentRecord`]: per-beta seed-mean of the per-seed minimum
//! validation loss, early-stop steps, and the horizon estimate `T_ES`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::betagrid::BetaGrid;
use crate::error::{Error, Result};
use crate::horizon::{self, HorizonCandidate, ValCurve, DEFAULT_PATIENCE_FRACTION};
use crate::optim::{self, DecayMode, OptimizerConfig, DEFAULT_EPSILON};
use crate::schedule::LrSchedule;
use crate::tasks::{make_task, Objective, Task, TaskSpec};

const BATCH_SALT: u64 = 0xba7c_4000;

/// Whether an experiment calibrates `R0` or only evaluates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Development,
    HeldOut,
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "development" | "dev" => Ok(SplitTag::Development),
            "held_out" | "held-out" | "heldout" => Ok(SplitTag::HeldOut),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Development => "development",
            SplitTag::HeldOut => "held_out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Val,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Val => "val",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Phase::Train),
            "val" | "valid" | "validation" => Ok(Phase::Val),
            other => Err(Error::config(format!("unknown split `{other}` (expected train or val)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub phase: Phase,
    pub loss: f64,
}

/// Loss trajectory of one (experiment, beta, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub experiment_id: String,
    pub beta: f64,
    pub seed: u64,
    pub total_steps: u64,
    pub records: Vec<LogRecord>,
    /// Step at which a non-finite loss or gradient appeared.
    pub diverged_at: Option<u64>,
}

impl RunLog {
    /// Checks ordering, finiteness and, for completed runs, the final val record.
    pub fn validate(&self) -> Result<()> {
        if self.records.windows(2).any(|w| w[1].step < w[0].step) {
            return Err(Error::domain(format!(
                "{}: run log records are not sorted by step",
                self.experiment_id
            )));
        }
        if self.records.iter().any(|r| !(r.loss.is_finite() && r.loss >= 0.0)) {
            return Err(Error::domain(format!(
                "{}: run log contains a negative or non-finite loss",
                self.experiment_id
            )));
        }
        if self.diverged_at.is_none()
            && !self
                .records
                .iter()
                .any(|r| r.phase == Phase::Val && r.step == self.total_steps)
        {
            return Err(Error::domain(format!(
                "{} beta={} seed={}: no val record at the final step {}",
                self.experiment_id, self.beta, self.seed, self.total_steps
            )));
        }
        Ok(())
    }

    pub fn val_points(&self) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Val)
            .map(|r| (r.step, r.loss))
            .collect()
    }

    pub fn val_curve(&self) -> Result<ValCurve> {
        ValCurve::new(self.val_points(), self.total_steps)
    }

    /// Minimum validation loss, or `+inf` for diverged runs.
    pub fn best_val_loss(&self) -> f64 {
        if self.diverged_at.is_some() {
            return f64::INFINITY;
        }
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Val)
            .map(|r| r.loss)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Validation losses at step 0, every `eval_every` steps, and at the end.
pub fn run_training(
    experiment_id: &str,
    task: &Task,
    config: &OptimizerConfig,
    schedule: &LrSchedule,
    total_steps: u64,
    eval_every: u64,
    seed: u64,
) -> Result<RunLog> {
    if total_steps == 0 {
        return Err(Error::config("total_steps must be at least 1"));
    }
    if eval_every == 0 || eval_every > total_steps {
        return Err(Error::config(format!(
            "eval_every must lie in [1, {total_steps}], got {eval_every}"
        )));
    }
    if schedule.total_steps < total_steps {
        return Err(Error::config(format!(
            "schedule covers {} steps but the run needs {total_steps}",
            schedule.total_steps
        )));
    }
    config.validate()?;

    let mut log = RunLog {
        experiment_id: experiment_id.to_string(),
        beta: config.beta,
        seed,
        total_steps,
        records: Vec::new(),
        diverged_at: None,
    };
    let mut params = task.initial_params();
    let mut state = optim::init_state(params.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BATCH_SALT);

    if !evaluate(task, &params, 0, &mut log) {
        log.diverged_at = Some(0);
        return Ok(log);
    }
    for step in 0..total_steps {
        let batch = task.sample_batch(&mut rng);
        let grads = task.grad(&params, &batch);
        let lr = schedule.lr_at(step)?;
        match optim::adam_step(&mut params, &grads, &mut state, config, lr) {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => {
                log.diverged_at = Some(step + 1);
                break;
            }
            Err(e) => return Err(e),
        }
        let done = step + 1;
        if (done % eval_every == 0 || done == total_steps) && !evaluate(task, &params, done, &mut log) {
            log.diverged_at = Some(done);
            break;
        }
    }
    Ok(log)
}

/// Appends train and val losses; false (and nothing appended) if either is non-finite.
fn evaluate(task: &Task, params: &[f64], step: u64, log: &mut RunLog) -> bool {
    let train = task.train_loss(params);
    let val = task.val_loss(params);
    if !(train.is_finite() && val.is_finite()) {
        return false;
    }
    log.records.push(LogRecord {
        step,
        phase: Phase::Train,
        loss: train,
    });
    log.records.push(LogRecord {
        step,
        phase: Phase::Val,
        loss: val,
    });
    true
}

/// Optimizer settings shared by every beta of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerDefaults {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub decay_mode: DecayMode,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Apply weight decay to bias coordinates too.
    #[serde(default)]
    pub decay_biases: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for OptimizerDefaults {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            weight_decay: 0.0,
            decay_mode: DecayMode::Coupled,
            clip_norm: None,
            decay_biases: false,
        }
    }
}

impl OptimizerDefaults {
    pub fn config(&self, beta: f64, task: &Task) -> Result<OptimizerConfig> {
        let mask = (self.weight_decay > 0.0 && !self.decay_biases).then(|| task.decay_mask());
        let config = OptimizerConfig::new(beta)?
            .with_epsilon(self.epsilon)
            .with_weight_decay(self.weight_decay, self.decay_mode)
            .with_clip_norm(self.clip_norm)
            .with_decay_mask(mask);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub lr_max: f64,
    /// Defaults to `lr_max` (no decay).
    #[serde(default)]
    pub lr_min: Option<f64>,
    #[serde(default)]
    pub warmup_steps: u64,
}

impl ScheduleSpec {
    pub fn build(&self, total_steps: u64) -> Result<LrSchedule> {
        LrSchedule::new(
            self.lr_max,
            self.lr_min.unwrap_or(self.lr_max),
            self.warmup_steps,
            total_steps,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSettings {
    #[serde(default = "default_patience_fraction")]
    pub patience_fraction: f64,
    #[serde(default)]
    pub min_delta: f64,
}

fn default_patience_fraction() -> f64 {
    DEFAULT_PATIENCE_FRACTION
}

impl Default for HorizonSettings {
    fn default() -> Self {
        Self {
            patience_fraction: DEFAULT_PATIENCE_FRACTION,
            min_delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default = "default_refine_top_k")]
    pub refine_top_k: usize,
    #[serde(default = "default_extra_seeds")]
    pub extra_seeds: usize,
}

fn default_refine_top_k() -> usize {
    5
}

fn default_extra_seeds() -> usize {
    2
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            refine_top_k: default_refine_top_k(),
            extra_seeds: default_extra_seeds(),
        }
    }
}

/// One experiment: a task, its training recipe and its split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub split: SplitTag,
    pub total_steps: u64,
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    pub task: TaskSpec,
    #[serde(default)]
    pub optimizer: OptimizerDefaults,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub horizon: HorizonSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty()
            || !self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::config(format!(
                "experiment_id `{}` must be non-empty and use only [A-Za-z0-9-_.]",
                self.experiment_id
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        if self.eval_every == 0 || self.eval_every > self.total_steps {
            return Err(Error::config("eval_every must lie in [1, total_steps]"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        self.task.validate()?;
        self.schedule.build(self.total_steps)?;
        Ok(())
    }

    /// The first seed followed by `extra` refinement seeds: the manifest's
    /// remaining seeds first, then consecutive integers after the largest one.
    pub fn seed_plan(&self, extra: usize) -> Vec<u64> {
        let mut seeds = self.seeds.clone();
        seeds.truncate(1 + extra);
        let mut next = self.seeds.iter().max().copied().unwrap_or(0);
        while seeds.len() < 1 + extra {
            next += 1;
            seeds.push(next);
        }
        seeds
    }

    pub fn run(&self, beta: f64, seed: u64) -> Result<RunLog> {
        let task = make_task(&self.task, seed)?;
        let config = self.optimizer.config(beta, &task)?;
        let schedule = self.schedule.build(self.total_steps)?;
        run_training(
            &self.experiment_id,
            &task,
            &config,
            &schedule,
            self.total_steps,
            self.eval_every,
            seed,
        )
    }
}

/// Per-beta summary inside an [`ExperimentRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub beta: f64,
    /// Seed-mean of per-seed minimum validation losses; `+inf` if every run diverged.
    pub loss: f64,
    /// Per-seed minima of the runs that did not diverge.
    pub seed_losses: Vec<f64>,
    /// Mean early-stop step over the non-diverged seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_time: Option<f64>,
}

impl BetaEntry {
    /// Sample standard deviation of the seed minima (0 for a single seed).
    pub fn seed_spread(&self) -> f64 {
        let n = self.seed_losses.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.seed_losses.iter().sum::<f64>() / n as f64;
        let var = self.seed_losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    }
}

/// Tolerance for matching stored betas against grid values.
pub const BETA_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment_id: String,
    pub split: SplitTag,
    pub total_steps: u64,
    pub t_es: u64,
    /// Sorted by beta.
    pub entries: Vec<BetaEntry>,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<()> {
        if self.t_es == 0 {
            return Err(Error::domain(format!("{}: T_ES must be positive", self.experiment_id)));
        }
        if self.entries.is_empty() {
            return Err(Error::domain(format!("{}: record has no betas", self.experiment_id)));
        }
        if self.entries.windows(2).any(|w| w[1].beta <= w[0].beta) {
            return Err(Error::domain(format!(
                "{}: betas must be strictly increasing",
                self.experiment_id
            )));
        }
        for e in &self.entries {
            if !(0.0..1.0).contains(&e.beta) {
                return Err(Error::domain(format!("{}: beta {} outside [0, 1)", self.experiment_id, e.beta)));
            }
            if !(e.loss > 0.0) {
                return Err(Error::domain(format!(
                    "{}: loss for beta {} must be positive",
                    self.experiment_id, e.beta
                )));
            }
        }
        Ok(())
    }

    pub fn entry(&self, beta: f64) -> Option<&BetaEntry> {
        self.entries.iter().find(|e| (e.beta - beta).abs() <= BETA_MATCH_TOL)
    }

    pub fn loss(&self, beta: f64) -> Option<f64> {
        self.entry(beta).map(|e| e.loss)
    }

    pub fn betas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.beta).collect()
    }

    /// True when every entry matches a grid value.
    pub fn on_grid(&self, grid: &BetaGrid) -> bool {
        self.entries
            .iter()
            .all(|e| grid.index_of(e.beta, BETA_MATCH_TOL).is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub refine_top_k: usize,
    pub extra_seeds: usize,
}

impl From<&SweepSettings> for SweepOptions {
    fn from(s: &SweepSettings) -> Self {
        Self {
            refine_top_k: s.refine_top_k,
            extra_seeds: s.extra_seeds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub record: ExperimentRecord,
    /// Ordered by (phase, beta, seed): first-seed runs, then refinement runs.
    pub runs: Vec<RunLog>,
}

/// Seed-mean of per-seed minimum validation losses over the non-diverged
/// runs, with the minima themselves. `+inf` when every run diverged.
pub fn seed_mean_loss(runs: &[&RunLog]) -> (f64, Vec<f64>) {
    let minima: Vec<f64> = runs
        .iter()
        .filter(|r| !r.diverged())
        .map(|r| r.best_val_loss())
        .collect();
    if minima.is_empty() {
        return (f64::INFINITY, minima);
    }
    (minima.iter().sum::<f64>() / minima.len() as f64, minima)
}

/// Condenses runs grouped by beta into an [`ExperimentRecord`] with its
/// `T_ES` estimate. Groups must be sorted by beta.
pub fn condense(
    experiment_id: &str,
    split: SplitTag,
    total_steps: u64,
    groups: &[(f64, Vec<&RunLog>)],
    settings: &HorizonSettings,
) -> Result<ExperimentRecord> {
    let mut entries = Vec::with_capacity(groups.len());
    let mut candidates = Vec::with_capacity(groups.len());
    for (beta, runs) in groups {
        let (loss, seed_losses) = seed_mean_loss(runs);
        let curves = runs
            .iter()
            .filter(|r| !r.diverged())
            .map(|r| r.val_curve())
            .collect::<Result<Vec<_>>>()?;
        let stop_time = if curves.is_empty() {
            None
        } else {
            Some(horizon::stop_time(&curves, settings.patience_fraction, settings.min_delta)?)
        };
        entries.push(BetaEntry {
            beta: *beta,
            loss,
            seed_losses,
            stop_time,
        });
        candidates.push(HorizonCandidate {
            beta: *beta,
            loss,
            curves,
        });
    }
    let estimate = horizon::estimate_t_es(&candidates, settings.patience_fraction, settings.min_delta)?;
    let record = ExperimentRecord {
        experiment_id: experiment_id.to_string(),
        split,
        total_steps,
        t_es: estimate.t_es,
        entries,
    };
    record.validate()?;
    Ok(record)
}

pub fn sweep(manifest: &ExperimentManifest, grid: &BetaGrid, options: &SweepOptions) -> Result<SweepOutcome> {
    manifest.validate()?;
    if grid.is_empty() {
        return Err(Error::config("beta grid is empty"));
    }
    if options.refine_top_k > grid.len() {
        return Err(Error::config(format!(
            "refine_top_k ({}) exceeds the grid size ({})",
            options.refine_top_k,
            grid.len()
        )));
    }
    let seeds = manifest.seed_plan(options.extra_seeds);
    let first_seed = seeds[0];

    let first: Vec<RunLog> = grid
        .values()
        .par_iter()
        .map(|&beta| manifest.run(beta, first_seed))
        .collect::<Result<_>>()?;

    let mut ranked: Vec<usize> = (0..grid.len())
        .filter(|&i| first[i].best_val_loss().is_finite())
        .collect();
    ranked.sort_by(|&a, &b| {
        first[a]
            .best_val_loss()
            .partial_cmp(&first[b].best_val_loss())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut refined: Vec<usize> = ranked.into_iter().take(options.refine_top_k).collect();
    refined.sort_unstable();

    let jobs: Vec<(usize, u64)> = refined
        .iter()
        .flat_map(|&i| seeds[1..].iter().map(move |&s| (i, s)))
        .collect();
    let extra: Vec<RunLog> = jobs
        .par_iter()
        .map(|&(i, seed)| manifest.run(grid.value(i), seed))
        .collect::<Result<_>>()?;

    let mut per_beta: Vec<Vec<&RunLog>> = first.iter().map(|r| vec![r]).collect();
    for ((i, _), run) in jobs.iter().zip(&extra) {
        per_beta[*i].push(run);
    }

    let groups: Vec<(f64, Vec<&RunLog>)> = per_beta
        .into_iter()
        .enumerate()
        .map(|(i, runs)| (grid.value(i), runs))
        .collect();
    let record = condense(
        &manifest.experiment_id,
        manifest.split,
        manifest.total_steps,
        &groups,
        &manifest.horizon,
    )?;
    let mut runs = first;
    runs.extend(extra);
    Ok(SweepOutcome { record, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::betagrid::build_grid;

    pub(crate) fn quad_manifest() -> ExperimentManifest {
        ExperimentManifest {
            experiment_id: "quad".into(),
            split: SplitTag::Development,
            total_steps: 300,
            eval_every: 20,
            seeds: vec![1, 2, 3],
            task: TaskSpec::noisy_quadratic(8, 5, 0.5, 10.0),
            optimizer: OptimizerDefaults::default(),
            schedule: ScheduleSpec {
                lr_max: 0.05,
                lr_min: Some(0.005),
                warmup_steps: 10,
            },
            horizon: HorizonSettings::default(),
            sweep: SweepSettings::default(),
        }
    }

    #[test]
    fn quadratic_converges() {
        let task = make_task(&TaskSpec::quadratic(4, 1), 1).unwrap();
        let config = OptimizerConfig::new(0.9).unwrap();
        let schedule = LrSchedule::constant(0.01, 500).unwrap();
        let log = run_training("q", &task, &config, &schedule, 500, 50, 1).unwrap();
        log.validate().unwrap();
        let curve = log.val_points();
        assert_eq!(curve.first().unwrap().0, 0);
        assert_eq!(curve.last().unwrap().0, 500);
        assert_eq!(curve.len(), 11);
        assert!(curve.last().unwrap().1 < curve[0].1);
    }

    #[test]
    fn final_step_is_always_evaluated() {
        let task = make_task(&TaskSpec::quadratic(2, 1), 1).unwrap();
        let config = OptimizerConfig::new(0.5).unwrap();
        let schedule = LrSchedule::constant(0.01, 25).unwrap();
        let log = run_training("q", &task, &config, &schedule, 25, 10, 1).unwrap();
        let steps: Vec<u64> = log.val_points().iter().map(|p| p.0).collect();
        assert_eq!(steps, [0, 10, 20, 25]);
        assert!(run_training("q", &task, &config, &schedule, 25, 0, 1).is_err());
        assert!(run_training("q", &task, &config, &schedule, 25, 26, 1).is_err());
        assert!(run_training("q", &task, &config, &schedule, 0, 1, 1).is_err());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let m = quad_manifest();
        let a = m.run(0.9, 4).unwrap();
        let b = m.run(0.9, 4).unwrap();
        assert_eq!(a, b);
        let c = m.run(0.9, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_recorded() {
        let task = make_task(&TaskSpec::quadratic(2, 1), 1).unwrap();
        let config = OptimizerConfig::new(0.0).unwrap();
        // A huge rate overflows the parameters after a couple of steps.
        let schedule = LrSchedule::constant(1e308, 10).unwrap();
        let log = run_training("q", &task, &config, &schedule, 10, 1, 1).unwrap();
        assert!(log.diverged());
        assert_eq!(log.best_val_loss(), f64::INFINITY);
        assert!(log.records.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn logistic_regression_learns() {
        let task = make_task(&TaskSpec::logistic(5, 2, 0.7), 3).unwrap();
        let config = OptimizerConfig::new(0.9).unwrap();
        let schedule = LrSchedule::constant(0.02, 400).unwrap();
        let log = run_training("lr", &task, &config, &schedule, 400, 100, 3).unwrap();
        let pts = log.val_points();
        assert!(pts.last().unwrap().1 < 0.8 * pts[0].1, "{pts:?}");
    }

    #[test]
    fn seed_plan_extends_the_list() {
        let mut m = quad_manifest();
        assert_eq!(m.seed_plan(2), [1, 2, 3]);
        assert_eq!(m.seed_plan(0), [1]);
        m.seeds = vec![7];
        assert_eq!(m.seed_plan(2), [7, 8, 9]);
    }

    #[test]
    fn sweep_follows_the_refinement_protocol() {
        let m = quad_manifest();
        let grid = build_grid();
        let out = sweep(&m, &grid, &SweepOptions { refine_top_k: 5, extra_seeds: 2 }).unwrap();
        assert_eq!(out.runs.len(), 13 + 10);
        assert_eq!(out.record.entries.len(), 13);
        let refined: Vec<&BetaEntry> = out.record.entries.iter().filter(|e| e.seed_losses.len() == 3).collect();
        assert_eq!(refined.len(), 5);
        for e in &out.record.entries {
            let mean = e.seed_losses.iter().sum::<f64>() / e.seed_losses.len() as f64;
            assert_eq!(e.loss, mean);
            let minima: Vec<f64> = out
                .runs
                .iter()
                .filter(|r| r.beta == e.beta)
                .map(|r| r.best_val_loss())
                .collect();
            assert_eq!(minima, e.seed_losses);
        }
        // Refined betas are the five best by the first seed.
        let mut by_first: Vec<(f64, f64)> = out.runs[..13].iter().map(|r| (r.best_val_loss(), r.beta)).collect();
        by_first.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut top: Vec<f64> = by_first[..5].iter().map(|p| p.1).collect();
        top.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got: Vec<f64> = refined.iter().map(|e| e.beta).collect();
        assert_eq!(got, top);

        let again = sweep(&m, &grid, &SweepOptions { refine_top_k: 5, extra_seeds: 2 }).unwrap();
        assert_eq!(again.record, out.record);
    }

    #[test]
    fn degenerate_protocol_uses_first_seed_only() {
        let m = quad_manifest();
        let out = sweep(&m, &build_grid(), &SweepOptions { refine_top_k: 0, extra_seeds: 2 }).unwrap();
        assert_eq!(out.runs.len(), 13);
        assert!(out.record.entries.iter().all(|e| e.seed_losses.len() == 1));
        assert!(sweep(&m, &build_grid(), &SweepOptions { refine_top_k: 14, extra_seeds: 2 }).is_err());
    }

    #[test]
    fn seed_mean_of_minima() {
        let log = |seed: u64, losses: &[f64], diverged: bool| RunLog {
            experiment_id: "x".into(),
            beta: 0.9,
            seed,
            total_steps: losses.len() as u64 - 1,
            records: losses
                .iter()
                .enumerate()
                .map(|(k, &loss)| LogRecord {
                    step: k as u64,
                    phase: Phase::Val,
                    loss,
                })
                .collect(),
            diverged_at: diverged.then_some(2),
        };
        let a = log(1, &[2.0, 1.0, 1.5], false);
        let b = log(2, &[1.1, 1.3, 1.4], false);
        let c = log(3, &[1.9, 1.2, 1.25], false);
        let (loss, minima) = seed_mean_loss(&[&a, &b, &c]);
        assert_eq!(minima, [1.0, 1.1, 1.2]);
        assert!((loss - 1.1).abs() < 1e-12);

        let d = log(4, &[0.5, 0.4, 0.3], true);
        assert_eq!(seed_mean_loss(&[&a, &d]).1, [1.0]);
        assert_eq!(seed_mean_loss(&[&d]).0, f64::INFINITY);

        let e = BetaEntry {
            beta: 0.9,
            loss,
            seed_losses: minima,
            stop_time: None,
        };
        assert!((e.seed_spread() - 0.1).abs() < 1e-12);
    }
}
