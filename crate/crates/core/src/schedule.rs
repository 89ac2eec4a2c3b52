//! Linear warmup followed by cosine decay.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(lr_max: f64, lr_min: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        let s = Self {
            lr_max,
            lr_min,
            warmup_steps,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    /// Flat rate with no warmup.
    pub fn constant(lr: f64, total_steps: u64) -> Result<Self> {
        Self::new(lr, lr, 0, total_steps)
    }

    /// Warmup of `max(floor, fraction * total_steps)` steps, as used by several
    /// vision recipes.
    pub fn with_warmup_fraction(
        lr_max: f64,
        lr_min: f64,
        floor: u64,
        fraction: f64,
        total_steps: u64,
    ) -> Result<Self> {
        let warmup = floor.max((fraction * total_steps as f64).round() as u64);
        Self::new(lr_max, lr_min, warmup, total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return Err(Error::config(format!("lr_max must be > 0, got {}", self.lr_max)));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::config(format!(
                "lr_min must lie in [0, lr_max], got {}",
                self.lr_min
            )));
        }
        if self.total_steps <= self.warmup_steps {
            return Err(Error::config(format!(
                "total_steps ({}) must exceed warmup_steps ({})",
                self.total_steps, self.warmup_steps
            )));
        }
        Ok(())
    }

    /// Learning rate for the update taken at `step` (0-based).
    ///
    /// During warmup the rate is `lr_max * (step + 1) / warmup_steps`, so the
    /// first update is nonzero and the ramp reaches `lr_max` at `warmup_steps`.
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::domain(format!(
                "step {step} is past the end of the schedule ({})",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.lr_max * (step + 1) as f64 / self.warmup_steps as f64);
        }
        if step == self.warmup_steps {
            return Ok(self.lr_max);
        }
        if step == self.total_steps {
            return Ok(self.lr_min);
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        Ok(self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * progress).cos()))
    }
}
