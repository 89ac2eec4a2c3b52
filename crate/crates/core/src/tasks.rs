//! Small training problems with hand-derived gradients.
//!
//! Every task is fully determined by its [`TaskSpec`] (data, via `data_seed`)
//! and the seed passed to [`make_task`] (initial parameters). Batches are
//! index lists into the training split, drawn with replacement.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DATA_SALT: u64 = 0x5eed_da7a;
const INIT_SALT: u64 = 0x1a17_0000;
const VAL_SALT: u64 = 0x0007_a1d0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quadratic,
    NoisyQuadratic,
    LogisticRegression,
    Mlp1,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(TaskKind::Quadratic),
            "noisy_quadratic" => Ok(TaskKind::NoisyQuadratic),
            "logistic_regression" => Ok(TaskKind::LogisticRegression),
            "mlp1" => Ok(TaskKind::Mlp1),
            other => Err(Error::config(format!("unknown task kind `{other}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::Quadratic => "quadratic",
            TaskKind::NoisyQuadratic => "noisy_quadratic",
            TaskKind::LogisticRegression => "logistic_regression",
            TaskKind::Mlp1 => "mlp1",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Parameter dimension for the quadratics, input features otherwise.
    pub dim: usize,
    /// Hidden width of `mlp1`; ignored by the other kinds.
    #[serde(default)]
    pub hidden: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub train_samples: usize,
    #[serde(default)]
    pub val_samples: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Ratio between the largest and smallest curvature of `noisy_quadratic`.
    #[serde(default = "default_condition")]
    pub condition: f64,
    /// Scale of the initial parameters (standard deviation for the
    /// quadratics, multiplier on fan-in scaling for the models).
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_batch_size() -> usize {
    8
}

fn default_condition() -> f64 {
    1.0
}

fn default_init_scale() -> f64 {
    1.0
}

impl TaskSpec {
    pub fn quadratic(dim: usize, data_seed: u64) -> Self {
        Self {
            kind: TaskKind::Quadratic,
            dim,
            hidden: 0,
            data_seed,
            noise_scale: 0.0,
            train_samples: 0,
            val_samples: 0,
            batch_size: 1,
            condition: 1.0,
            init_scale: 1.0,
        }
    }

    pub fn noisy_quadratic(dim: usize, data_seed: u64, noise_scale: f64, condition: f64) -> Self {
        Self {
            kind: TaskKind::NoisyQuadratic,
            noise_scale,
            condition,
            train_samples: 256,
            val_samples: 256,
            batch_size: 4,
            ..Self::quadratic(dim, data_seed)
        }
    }

    pub fn logistic(dim: usize, data_seed: u64, noise_scale: f64) -> Self {
        Self {
            kind: TaskKind::LogisticRegression,
            noise_scale,
            train_samples: 128,
            val_samples: 256,
            batch_size: 8,
            ..Self::quadratic(dim, data_seed)
        }
    }

    pub fn mlp1(dim: usize, hidden: usize, data_seed: u64, noise_scale: f64) -> Self {
        Self {
            kind: TaskKind::Mlp1,
            hidden,
            noise_scale,
            train_samples: 128,
            val_samples: 256,
            batch_size: 8,
            ..Self::quadratic(dim, data_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("task dim must be positive"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("noise_scale must be >= 0"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale must be >= 0"));
        }
        match self.kind {
            TaskKind::Quadratic => {
                if self.noise_scale != 0.0 {
                    return Err(Error::config(
                        "quadratic takes no noise; use noisy_quadratic",
                    ));
                }
            }
            TaskKind::NoisyQuadratic | TaskKind::LogisticRegression | TaskKind::Mlp1 => {
                if self.train_samples == 0 || self.val_samples == 0 {
                    return Err(Error::config(format!(
                        "{} needs train_samples and val_samples > 0",
                        self.kind
                    )));
                }
                if self.batch_size == 0 {
                    return Err(Error::config("batch_size must be positive"));
                }
                if self.kind == TaskKind::NoisyQuadratic && !(self.condition >= 1.0) {
                    return Err(Error::config("condition must be >= 1"));
                }
                if self.kind == TaskKind::Mlp1 && self.hidden == 0 {
                    return Err(Error::config("mlp1 needs hidden > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Indices into the training split.
pub type Batch = Vec<usize>;

/// Loss and gradient oracle over flat parameter vectors.
pub trait Objective {
    fn dim(&self) -> usize;
    fn loss(&self, params: &[f64], batch: &[usize]) -> f64;
    fn grad(&self, params: &[f64], batch: &[usize]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
enum Model {
    Quadratic {
        target: Vec<f64>,
    },
    NoisyQuadratic {
        curvature: Vec<f64>,
        train: Vec<Vec<f64>>,
        val: Vec<Vec<f64>>,
    },
    Logistic {
        train: Dataset,
        val: Dataset,
    },
    Mlp {
        hidden: usize,
        train: Dataset,
        val: Dataset,
    },
}

#[derive(Debug, Clone)]
struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Task {
    spec: TaskSpec,
    init: Vec<f64>,
    model: Model,
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<Task> {
    spec.validate()?;
    let d = spec.dim;
    let mut data = rng_for(spec.data_seed, DATA_SALT);
    let mut init_rng = rng_for(seed, INIT_SALT);

    let (model, init) = match spec.kind {
        TaskKind::Quadratic => {
            let target = normal_vec(&mut data, d, 1.0);
            let init = normal_vec(&mut init_rng, d, spec.init_scale);
            (Model::Quadratic { target }, init)
        }
        TaskKind::NoisyQuadratic => {
            let target = normal_vec(&mut data, d, 1.0);
            let curvature: Vec<f64> = (0..d)
                .map(|i| {
                    let frac = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.0 };
                    spec.condition.powf(-frac)
                })
                .collect();
            let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|_| {
                        target
                            .iter()
                            .map(|t| t + spec.noise_scale * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    })
                    .collect()
            };
            let train = draw(&mut data, spec.train_samples);
            let mut val_rng = rng_for(spec.data_seed, VAL_SALT);
            let val = draw(&mut val_rng, spec.val_samples);
            let init = normal_vec(&mut init_rng, d, spec.init_scale);
            (
                Model::NoisyQuadratic {
                    curvature,
                    train,
                    val,
                },
                init,
            )
        }
        TaskKind::LogisticRegression => {
            let mean = normal_vec(&mut data, d, 1.0 / (d as f64).sqrt());
            let blobs = |rng: &mut ChaCha8Rng, n: usize| -> Dataset {
                let mut x = Vec::with_capacity(n);
                let mut y = Vec::with_capacity(n);
                for _ in 0..n {
                    let label = if rng.random::<bool>() { 1.0 } else { 0.0 };
                    let sign = 2.0 * label - 1.0;
                    x.push(
                        mean.iter()
                            .map(|m| sign * m + spec.noise_scale * rng.sample::<f64, _>(StandardNormal))
                            .collect(),
                    );
                    y.push(label);
                }
                Dataset { x, y }
            };
            let train = blobs(&mut data, spec.train_samples);
            let mut val_rng = rng_for(spec.data_seed, VAL_SALT);
            let val = blobs(&mut val_rng, spec.val_samples);
            let mut init = normal_vec(&mut init_rng, d, spec.init_scale / (d as f64).sqrt());
            init.push(0.0);
            (Model::Logistic { train, val }, init)
        }
        TaskKind::Mlp1 => {
            let h = spec.hidden;
            let teacher = mlp_init(&mut data, d, h, 2.0);
            let regression = |rng: &mut ChaCha8Rng, n: usize| -> Dataset {
                let x: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(rng, d, 1.0)).collect();
                let y = x
                    .iter()
                    .map(|xi| {
                        mlp_forward(&teacher, d, h, xi).0
                            + spec.noise_scale * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                Dataset { x, y }
            };
            let train = regression(&mut data, spec.train_samples);
            let mut val_rng = rng_for(spec.data_seed, VAL_SALT);
            let val = regression(&mut val_rng, spec.val_samples);
            let init = mlp_init(&mut init_rng, d, h, spec.init_scale);
            (Model::Mlp { hidden: h, train, val }, init)
        }
    };

    Ok(Task {
        spec: spec.clone(),
        init,
        model,
    })
}

// Flat layout: W1 (h x d, row-major), b1 (h), w2 (h), b2.
fn mlp_init(rng: &mut ChaCha8Rng, d: usize, h: usize, scale: f64) -> Vec<f64> {
    let mut p = normal_vec(rng, h * d, scale / (d as f64).sqrt());
    p.extend(std::iter::repeat_n(0.0, h));
    p.extend(normal_vec(rng, h, scale / (h as f64).sqrt()));
    p.push(0.0);
    p
}

fn mlp_forward(p: &[f64], d: usize, h: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let (w1, rest) = p.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h);
    let act: Vec<f64> = (0..h)
        .map(|j| {
            let row = &w1[j * d..(j + 1) * d];
            (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[j]).tanh()
        })
        .collect();
    let out = act.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + b2[0];
    (out, act)
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Task {
    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn initial_params(&self) -> Vec<f64> {
        self.init.clone()
    }

    pub fn train_size(&self) -> usize {
        match &self.model {
            Model::Quadratic { .. } => 0,
            Model::NoisyQuadratic { train, .. } => train.len(),
            Model::Logistic { train, .. } | Model::Mlp { train, .. } => train.x.len(),
        }
    }

    /// Coordinates that receive weight decay: everything except biases.
    pub fn decay_mask(&self) -> Vec<bool> {
        match &self.model {
            Model::Quadratic { .. } | Model::NoisyQuadratic { .. } => vec![true; self.dim()],
            Model::Logistic { .. } => {
                let mut m = vec![true; self.spec.dim];
                m.push(false);
                m
            }
            Model::Mlp { hidden, .. } => {
                let (d, h) = (self.spec.dim, *hidden);
                let mut m = vec![true; h * d];
                m.extend(std::iter::repeat_n(false, h));
                m.extend(std::iter::repeat_n(true, h));
                m.push(false);
                m
            }
        }
    }

    pub fn sample_batch<R: Rng>(&self, rng: &mut R) -> Batch {
        let n = self.train_size();
        if n == 0 {
            return Vec::new();
        }
        (0..self.spec.batch_size).map(|_| rng.random_range(0..n)).collect()
    }

    /// A fixed batch (the first `batch_size` training samples).
    pub fn fixed_batch(&self) -> Batch {
        (0..self.spec.batch_size.min(self.train_size())).collect()
    }

    pub fn full_train_batch(&self) -> Batch {
        (0..self.train_size()).collect()
    }

    pub fn train_loss(&self, params: &[f64]) -> f64 {
        self.loss(params, &self.full_train_batch())
    }

    pub fn val_loss(&self, params: &[f64]) -> f64 {
        match &self.model {
            Model::Quadratic { target } => quad_loss(params, target, None),
            Model::NoisyQuadratic { curvature, val, .. } => mean(val.iter().map(|c| quad_loss(params, c, Some(curvature)))),
            Model::Logistic { val, .. } => logistic_loss(params, val, 0..val.x.len()),
            Model::Mlp { hidden, val, .. } => mlp_loss(params, self.spec.dim, *hidden, val, 0..val.x.len()),
        }
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn quad_loss(p: &[f64], c: &[f64], curvature: Option<&[f64]>) -> f64 {
    0.5 * p
        .iter()
        .zip(c)
        .enumerate()
        .map(|(i, (pi, ci))| curvature.map_or(1.0, |h| h[i]) * (pi - ci).powi(2))
        .sum::<f64>()
}

fn logistic_loss(p: &[f64], data: &Dataset, idx: impl Iterator<Item = usize>) -> f64 {
    let d = p.len() - 1;
    mean(idx.map(|k| {
        let z = data.x[k].iter().zip(&p[..d]).map(|(x, w)| x * w).sum::<f64>() + p[d];
        // -y log s(z) - (1 - y) log(1 - s(z))
        softplus(z) - data.y[k] * z
    }))
}

fn mlp_loss(p: &[f64], d: usize, h: usize, data: &Dataset, idx: impl Iterator<Item = usize>) -> f64 {
    mean(idx.map(|k| {
        let (out, _) = mlp_forward(p, d, h, &data.x[k]);
        0.5 * (out - data.y[k]).powi(2)
    }))
}

impl Objective for Task {
    fn dim(&self) -> usize {
        self.init.len()
    }

    fn loss(&self, params: &[f64], batch: &[usize]) -> f64 {
        match &self.model {
            Model::Quadratic { target } => quad_loss(params, target, None),
            Model::NoisyQuadratic {
                curvature, train, ..
            } => mean(batch.iter().map(|&k| quad_loss(params, &train[k], Some(curvature)))),
            Model::Logistic { train, .. } => logistic_loss(params, train, batch.iter().copied()),
            Model::Mlp { hidden, train, .. } => {
                mlp_loss(params, self.spec.dim, *hidden, train, batch.iter().copied())
            }
        }
    }

    fn grad(&self, params: &[f64], batch: &[usize]) -> Vec<f64> {
        let n = params.len();
        match &self.model {
            Model::Quadratic { target } => params.iter().zip(target).map(|(p, t)| p - t).collect(),
            Model::NoisyQuadratic {
                curvature, train, ..
            } => {
                let mut g = vec![0.0; n];
                for &k in batch {
                    for i in 0..n {
                        g[i] += curvature[i] * (params[i] - train[k][i]);
                    }
                }
                let scale = 1.0 / batch.len().max(1) as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                g
            }
            Model::Logistic { train, .. } => {
                let d = n - 1;
                let mut g = vec![0.0; n];
                for &k in batch {
                    let x = &train.x[k];
                    let z = x.iter().zip(&params[..d]).map(|(a, w)| a * w).sum::<f64>() + params[d];
                    let r = sigmoid(z) - train.y[k];
                    for i in 0..d {
                        g[i] += r * x[i];
                    }
                    g[d] += r;
                }
                let scale = 1.0 / batch.len().max(1) as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                g
            }
            Model::Mlp { hidden, train, .. } => {
                let (d, h) = (self.spec.dim, *hidden);
                let mut g = vec![0.0; n];
                let w2 = &params[h * d + h..h * d + 2 * h];
                for &k in batch {
                    let x = &train.x[k];
                    let (out, act) = mlp_forward(params, d, h, x);
                    let r = out - train.y[k];
                    for j in 0..h {
                        // d tanh(z) / dz = 1 - tanh(z)^2
                        let delta = r * w2[j] * (1.0 - act[j] * act[j]);
                        let row = &mut g[j * d..(j + 1) * d];
                        for i in 0..d {
                            row[i] += delta * x[i];
                        }
                        g[h * d + j] += delta;
                        g[h * d + h + j] += r * act[j];
                    }
                    g[n - 1] += r;
                }
                let scale = 1.0 / batch.len().max(1) as f64;
                g.iter_mut().for_each(|v| *v *= scale);
                g
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub passed: bool,
    pub max_rel_deviation: f64,
    pub worst_index: usize,
}

/// Compares the analytic gradient with central differences on the task's
/// fixed batch.
///
/// The step for coordinate `i` is `1e-5 * (1 + |p_i|)`. The per-coordinate
/// deviation is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check<O: Objective + ?Sized>(
    objective: &O,
    params: &[f64],
    batch: &[usize],
    tol: f64,
) -> Result<GradCheck> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be > 0, got {tol}")));
    }
    if params.len() != objective.dim() {
        return Err(Error::Shape {
            what: "params",
            expected: objective.dim(),
            got: params.len(),
        });
    }
    let analytic = objective.grad(params, batch);
    let mut probe = params.to_vec();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        let h = 1e-5 * (1.0 + params[i].abs());
        probe[i] = params[i] + h;
        let up = objective.loss(&probe, batch);
        probe[i] = params[i] - h;
        let down = objective.loss(&probe, batch);
        probe[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("loss during gradient check"));
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let dev = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if i == 0 || dev > worst.0 {
            worst = (dev, i);
        }
    }
    Ok(GradCheck {
        passed: worst.0 <= tol,
        max_rel_deviation: worst.0,
        worst_index: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Corrupted<'a>(&'a Task);

    impl Objective for Corrupted<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn loss(&self, p: &[f64], b: &[usize]) -> f64 {
            self.0.loss(p, b)
        }
        fn grad(&self, p: &[f64], b: &[usize]) -> Vec<f64> {
            let mut g = self.0.grad(p, b);
            g[0] += 0.01;
            g
        }
    }

    fn all_kinds() -> Vec<TaskSpec> {
        vec![
            TaskSpec::quadratic(5, 3),
            TaskSpec::noisy_quadratic(6, 3, 0.5, 100.0),
            TaskSpec::logistic(4, 3, 1.0),
            TaskSpec::mlp1(3, 5, 3, 0.1),
        ]
    }

    #[test]
    fn quadratic_minimum() {
        let task = make_task(&TaskSpec::quadratic(2, 11), 1).unwrap();
        let Model::Quadratic { target } = &task.model else {
            unreachable!()
        };
        let star = target.clone();
        assert_eq!(task.val_loss(&star), 0.0);
        assert_eq!(task.grad(&star, &[]), vec![0.0, 0.0]);
        let p = vec![star[0] + 1.0, star[1] - 2.0];
        assert_abs_diff_eq!(task.loss(&p, &[]), 2.5, epsilon = 1e-12);
        let g = task.grad(&p, &[]);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_construction() {
        for spec in all_kinds() {
            let a = make_task(&spec, 7).unwrap();
            let b = make_task(&spec, 7).unwrap();
            let c = make_task(&spec, 8).unwrap();
            assert_eq!(a.initial_params(), b.initial_params());
            assert_ne!(a.initial_params(), c.initial_params());
            let p = a.initial_params();
            assert_eq!(a.val_loss(&p).to_bits(), b.val_loss(&p).to_bits());
            // Data depends on the task description only.
            assert_eq!(a.val_loss(&p).to_bits(), c.val_loss(&p).to_bits());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for spec in all_kinds() {
            let task = make_task(&spec, 2).unwrap();
            let check = gradient_check(&task, &task.initial_params(), &task.fixed_batch(), 1e-4).unwrap();
            assert!(check.passed, "{}: {:?}", spec.kind, check);
        }
        let task = make_task(&TaskSpec::quadratic(8, 1), 1).unwrap();
        let check = gradient_check(&task, &task.initial_params(), &[], 1e-8).unwrap();
        assert!(check.max_rel_deviation <= 1e-8, "{check:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let task = make_task(&TaskSpec::mlp1(3, 4, 1, 0.1), 1).unwrap();
        let check =
            gradient_check(&Corrupted(&task), &task.initial_params(), &task.fixed_batch(), 1e-4).unwrap();
        assert!(!check.passed);
        assert_eq!(check.worst_index, 0);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let task = make_task(&TaskSpec::quadratic(2, 1), 1).unwrap();
        let err = gradient_check(&task, &[f64::MAX, 0.0], &[], 1e-4);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn spec_validation() {
        assert!("resnet".parse::<TaskKind>().is_err());
        assert_eq!("mlp1".parse::<TaskKind>().unwrap(), TaskKind::Mlp1);
        let mut spec = TaskSpec::quadratic(2, 0);
        spec.noise_scale = 0.1;
        assert!(make_task(&spec, 0).is_err());
        assert!(make_task(&TaskSpec::mlp1(3, 0, 0, 0.1), 0).is_err());
        assert!(make_task(&TaskSpec::quadratic(0, 0), 0).is_err());
    }

    #[test]
    fn decay_mask_excludes_biases() {
        let task = make_task(&TaskSpec::mlp1(2, 3, 0, 0.0), 0).unwrap();
        let mask = task.decay_mask();
        assert_eq!(mask.len(), task.dim());
        assert_eq!(mask.iter().filter(|m| !**m).count(), 3 + 1);
        let task = make_task(&TaskSpec::logistic(4, 0, 1.0), 0).unwrap();
        assert_eq!(task.decay_mask(), vec![true, true, true, true, false]);
    }
}
