//! Balanced Adam: both moment estimates share one decay rate `beta`.
//!
//! With `beta1 == beta2 == beta` the update
//!
//! ```text
//! m_t = beta * m_{t-1} + (1 - beta) * g_t
//! v_t = beta * v_{t-1} + (1 - beta) * g_t^2
//! p  -= lr * m_hat / (sqrt(v_hat) + eps)
//! ```
//!
//! uses the same bias-correction factor `1 - beta^t` for both moments, so the
//! corrections cancel in the ratio whenever `eps == 0`. The statistics have a
//! single memory horizon of `1 / (1 - beta)` steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// How weight decay enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// L2 penalty folded into the gradient before the moment updates (Adam).
    #[default]
    Coupled,
    /// Parameters shrunk directly by `lr * weight_decay` (AdamW).
    Decoupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub beta: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub clip_norm: Option<f64>,
    /// Per-coordinate decay mask; `None` decays every coordinate. Stands in for
    /// the usual "no decay on biases and norm parameters" parameter groups.
    pub decay_mask: Option<Vec<bool>>,
}

impl OptimizerConfig {
    pub fn new(beta: f64) -> Result<Self> {
        let config = Self {
            beta,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64, mode: DecayMode) -> Self {
        self.weight_decay = weight_decay;
        self.decay_mode = mode;
        self
    }

    pub fn with_clip_norm(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn with_decay_mask(mut self, mask: Option<Vec<bool>>) -> Self {
        self.decay_mask = mask;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::domain(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::domain(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::domain(format!("clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    fn decays(&self, i: usize) -> bool {
        self.decay_mask.as_ref().is_none_or(|mask| mask[i])
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta: 0.9,
            epsilon: DEFAULT_EPSILON,
            weight_decay: 0.0,
            decay_mode: DecayMode::Coupled,
            clip_norm: None,
            decay_mask: None,
        }
    }
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

pub fn init_state(dim: usize) -> Result<OptimizerState> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(OptimizerState {
        m: vec![0.0; dim],
        v: vec![0.0; dim],
        step: 0,
    })
}

/// Memory horizon `1 / (1 - beta)` of the moment estimates, in steps.
pub fn effective_horizon(beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok(1.0 / (1.0 - beta))
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `grads` by `min(1, clip_norm / ||grads||)`.
pub fn clip_global_norm(grads: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(Error::domain(format!("clip_norm must be > 0, got {clip_norm}")));
    }
    let norm = l2_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm"));
    }
    if norm <= clip_norm {
        return Ok(grads.to_vec());
    }
    let scale = clip_norm / norm;
    Ok(grads.iter().map(|g| g * scale).collect())
}

/// Applies one balanced Adam update in place.
///
/// Order of operations: global-norm clipping, coupled decay (added to the
/// gradient), moment updates, bias-corrected step, then decoupled decay using
/// the pre-update parameters (`p <- p - lr * wd * p - delta`).
///
/// All inputs are validated before anything is written, so on error both
/// `params` and `state` are left untouched.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    config.validate()?;
    let n = params.len();
    if grads.len() != n {
        return Err(Error::Shape {
            what: "grads",
            expected: n,
            got: grads.len(),
        });
    }
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape {
            what: "optimizer state",
            expected: n,
            got: state.m.len().min(state.v.len()),
        });
    }
    if let Some(mask) = &config.decay_mask {
        if mask.len() != n {
            return Err(Error::Shape {
                what: "decay mask",
                expected: n,
                got: mask.len(),
            });
        }
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::domain(format!("learning rate must be > 0, got {lr}")));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("params"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("grads"));
    }

    let mut g = match config.clip_norm {
        Some(c) => clip_global_norm(grads, c)?,
        None => grads.to_vec(),
    };
    let wd = config.weight_decay;
    if wd > 0.0 && config.decay_mode == DecayMode::Coupled {
        for (i, (gi, p)) in g.iter_mut().zip(params.iter()).enumerate() {
            if config.decays(i) {
                *gi += wd * p;
            }
        }
    }

    let beta = config.beta;
    state.step += 1;
    // beta == 0 gives 0^t == 0 for t >= 1, so the correction factor is exactly 1.
    let correction = 1.0 - beta.powf(state.step as f64);

    for i in 0..n {
        let gi = g[i];
        let m = beta * state.m[i] + (1.0 - beta) * gi;
        let v = beta * state.v[i] + (1.0 - beta) * gi * gi;
        state.m[i] = m;
        state.v[i] = v;

        let m_hat = m / correction;
        let v_hat = v / correction;
        let denom = v_hat.sqrt() + config.epsilon;
        let delta = if denom > 0.0 { lr * m_hat / denom } else { 0.0 };

        let p = params[i];
        let decay = if wd > 0.0 && config.decay_mode == DecayMode::Decoupled && config.decays(i) {
            lr * wd * p
        } else {
            0.0
        };
        params[i] = p - delta - decay;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn cfg(beta: f64) -> OptimizerConfig {
        OptimizerConfig::new(beta).unwrap().with_epsilon(0.0)
    }

    #[test]
    fn init_state_zeroes() {
        let s = init_state(3).unwrap();
        assert_eq!(s.m, vec![0.0; 3]);
        assert_eq!(s.v, vec![0.0; 3]);
        assert_eq!(s.step, 0);
        let s = init_state(1).unwrap();
        assert_eq!((s.m.len(), s.v.len(), s.step), (1, 1, 0));
        assert!(matches!(init_state(0), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn horizon_values() {
        assert_relative_eq!(effective_horizon(0.999).unwrap(), 1000.0, max_relative = 1e-12);
        assert_eq!(effective_horizon(0.0).unwrap(), 1.0);
        assert_relative_eq!(effective_horizon(0.9).unwrap(), 10.0, max_relative = 1e-12);
        assert!(effective_horizon(1.0).is_err());
        assert!(effective_horizon(-0.1).is_err());
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_global_norm(&[3.0, 4.0], 10.0).unwrap(), vec![3.0, 4.0]);
        let c = clip_global_norm(&[3.0, 4.0], 1.0).unwrap();
        assert_relative_eq!(c[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(c[1], 0.8, max_relative = 1e-12);
        assert_eq!(clip_global_norm(&[0.0, 0.0], 0.5).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            clip_global_norm(&[f64::NAN, 1.0], 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(clip_global_norm(&[1.0], 0.0).is_err());
    }

    #[test]
    fn constant_gradient_moves_by_lr_sign() {
        for &beta in &[0.0, 0.438, 0.9, 0.999] {
            let config = cfg(beta);
            let mut state = init_state(3).unwrap();
            let mut p = vec![0.0; 3];
            let g = [2.5, -0.01, 7.0];
            for _ in 0..50 {
                let before = p.clone();
                adam_step(&mut p, &g, &mut state, &config, 0.1).unwrap();
                for i in 0..3 {
                    let delta = before[i] - p[i];
                    assert!((delta - 0.1 * g[i].signum()).abs() < 1e-10, "beta={beta}");
                }
            }
        }
    }

    #[test]
    fn beta_zero_is_sign_descent() {
        let config = cfg(0.0);
        let mut state = init_state(4).unwrap();
        let mut p = vec![1.0; 4];
        let grads = [[0.3, -2.0, 5.0, -1e-6], [-7.0, 0.1, 0.2, 3.0]];
        for g in &grads {
            let before = p.clone();
            adam_step(&mut p, g, &mut state, &config, 0.05).unwrap();
            for i in 0..4 {
                assert_abs_diff_eq!(before[i] - p[i], 0.05 * g[i].signum(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_gradient_with_zero_epsilon_is_a_no_op() {
        let config = cfg(0.9);
        let mut state = init_state(2).unwrap();
        let mut p = vec![1.0, -1.0];
        adam_step(&mut p, &[0.0, 0.0], &mut state, &config, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -1.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn rejected_updates_leave_state_untouched() {
        let config = cfg(0.9);
        let mut state = init_state(2).unwrap();
        let mut p = vec![1.0, 2.0];
        adam_step(&mut p, &[0.5, 0.5], &mut state, &config, 0.1).unwrap();
        let (p0, s0) = (p.clone(), state.clone());

        let err = adam_step(&mut p, &[f64::INFINITY, 0.0], &mut state, &config, 0.1);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        let err = adam_step(&mut p, &[1.0], &mut state, &config, 0.1);
        assert!(matches!(err, Err(Error::Shape { .. })));
        assert!(adam_step(&mut p, &[1.0, 1.0], &mut state, &config, 0.0).is_err());
        assert_eq!(p, p0);
        assert_eq!(state, s0);
    }

    #[test]
    fn coupled_and_decoupled_decay_differ() {
        let base = cfg(0.9);
        let coupled = base.clone().with_weight_decay(0.1, DecayMode::Coupled);
        let decoupled = base.with_weight_decay(0.1, DecayMode::Decoupled);
        let g = [0.2, -0.3];
        let mut pc = vec![1.0, 2.0];
        let mut pd = pc.clone();
        adam_step(&mut pc, &g, &mut init_state(2).unwrap(), &coupled, 0.01).unwrap();
        adam_step(&mut pd, &g, &mut init_state(2).unwrap(), &decoupled, 0.01).unwrap();
        assert_ne!(pc, pd);
        // Decoupled: sign step plus lr * wd * p.
        assert_relative_eq!(pd[0], 1.0 - 0.01 - 0.01 * 0.1 * 1.0, max_relative = 1e-12);
    }

    #[test]
    fn decay_mask_skips_coordinates() {
        let config = cfg(0.5)
            .with_weight_decay(0.5, DecayMode::Decoupled)
            .with_decay_mask(Some(vec![true, false]));
        let mut p = vec![1.0, 1.0];
        adam_step(&mut p, &[1.0, 1.0], &mut init_state(2).unwrap(), &config, 0.1).unwrap();
        assert_relative_eq!(p[0], 1.0 - 0.1 - 0.05, max_relative = 1e-12);
        assert_relative_eq!(p[1], 0.9, max_relative = 1e-12);
    }

    #[test]
    fn clipping_precedes_moments() {
        let config = cfg(0.0).with_clip_norm(Some(1.0));
        let mut state = init_state(2).unwrap();
        let mut p = vec![0.0, 0.0];
        adam_step(&mut p, &[3.0, 4.0], &mut state, &config, 1.0).unwrap();
        assert_relative_eq!(state.m[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(state.v[1], 0.64, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn ema_matches_closed_form(
            beta in 0.0f64..0.999,
            grads in prop::collection::vec(-10.0f64..10.0, 1..=64),
        ) {
            let config = cfg(beta);
            let mut state = init_state(1).unwrap();
            let mut p = vec![0.0];
            for g in &grads {
                adam_step(&mut p, &[*g], &mut state, &config, 1e-3).unwrap();
            }
            let t = grads.len();
            let (mut m, mut v) = (0.0, 0.0);
            for (k, g) in grads.iter().enumerate() {
                let w = (1.0 - beta) * beta.powi((t - 1 - k) as i32);
                m += w * g;
                v += w * g * g;
            }
            let scale_m = grads.iter().map(|g| g.abs()).fold(0.0, f64::max) * (1.0 - beta);
            prop_assert!((state.m[0] - m).abs() <= 1e-12 * m.abs().max(scale_m).max(1e-300));
            prop_assert!((state.v[0] - v).abs() <= 1e-12 * v.abs().max(1e-300));
            prop_assert!(state.v[0] >= 0.0);
            prop_assert_eq!(state.step, t as u64);
        }
    }
}
