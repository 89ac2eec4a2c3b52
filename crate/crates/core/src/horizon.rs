//! Early stopping on validation curves and the effective learning horizon.
//!
//! The horizon `T_ES` of an experiment is read off the early-stopping steps
//! of its two best beta values: average the two steps and keep one
//! significant digit. The estimate is deliberately coarse.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub const DEFAULT_PATIENCE_FRACTION: f64 = 0.10;

/// Validation losses at increasing optimizer steps, for a run of `budget` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ValCurve {
    points: Vec<(u64, f64)>,
    budget: u64,
}

impl ValCurve {
    pub fn new(points: Vec<(u64, f64)>, budget: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("validation curve is empty"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::domain(format!(
                    "curve steps must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(step, _)) = points.iter().find(|(s, _)| *s > budget) {
            return Err(Error::domain(format!("curve step {step} exceeds budget {budget}")));
        }
        if points.iter().any(|(_, l)| !l.is_finite()) {
            return Err(Error::NonFinite("validation curve"));
        }
        Ok(Self { points, budget })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn min_loss(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

/// Step of the best validation loss seen before patience ran out.
///
/// Points are scanned in order. A point improves on the running best iff
/// `loss < best - min_delta`. Scanning stops at the first non-improving point
/// lying more than `patience_steps` optimizer steps after the best point.
pub fn early_stop_step(curve: &ValCurve, patience_steps: u64, min_delta: f64) -> Result<u64> {
    if patience_steps == 0 {
        return Err(Error::domain("patience must be positive"));
    }
    if !(min_delta >= 0.0) {
        return Err(Error::domain(format!("min_delta must be >= 0, got {min_delta}")));
    }
    let mut iter = curve.points.iter();
    let &(mut best_step, mut best) = iter.next().expect("curve is nonempty");
    for &(step, loss) in iter {
        if loss < best - min_delta {
            best = loss;
            best_step = step;
        } else if step - best_step > patience_steps {
            break;
        }
    }
    Ok(best_step)
}

/// Patience in steps for a fraction of the training budget (at least one step).
pub fn patience_for(budget: u64, fraction: f64) -> Result<u64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain(format!(
            "patience fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok(((fraction * budget as f64).round() as u64).max(1))
}

/// Rounds to one significant decimal digit, halves away from zero.
pub fn round_sig1(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("round_sig1 needs a positive value, got {x}")));
    }
    let mut exp = x.log10().floor() as i32;
    // log10 can land one off near exact powers of ten.
    if pow10(exp) > x {
        exp -= 1;
    } else if pow10(exp + 1) <= x {
        exp += 1;
    }
    // Negative exponents divide by an exact power of ten so 0.25 -> 0.3 exactly.
    if exp >= 0 {
        let scale = pow10(exp);
        Ok((x / scale).round() * scale)
    } else {
        let scale = 10f64.powi(-exp);
        Ok((x * scale).round() / scale)
    }
}

fn pow10(exp: i32) -> f64 {
    if exp >= 0 {
        10f64.powi(exp)
    } else {
        1.0 / 10f64.powi(-exp)
    }
}

/// One beta's validation curves (one per seed) and its seed-aggregated loss.
#[derive(Debug, Clone)]
pub struct HorizonCandidate {
    pub beta: f64,
    pub loss: f64,
    pub curves: Vec<ValCurve>,
}

/// Early-stop step of a beta: the mean of its per-seed early-stop steps.
pub fn stop_time(curves: &[ValCurve], patience_fraction: f64, min_delta: f64) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::InsufficientData("no curves".into()));
    }
    let mut sum = 0.0;
    for c in curves {
        let patience = patience_for(c.budget(), patience_fraction)?;
        sum += early_stop_step(c, patience, min_delta)? as f64;
    }
    Ok(sum / curves.len() as f64)
}

/// Horizon from two early-stop steps: their mean, rounded to one significant
/// digit. A mean below one step is lifted to one.
pub fn t_es_from_stops(first: f64, second: f64) -> Result<u64> {
    let mean = 0.5 * (first + second);
    Ok(round_sig1(mean.max(1.0))? as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonEstimate {
    pub t_es: u64,
    /// The two best betas, best first.
    pub betas: [f64; 2],
    pub stop_steps: [f64; 2],
}

/// Estimates `T_ES` from the two betas with the lowest loss.
///
/// Candidates with a non-finite loss or no curves are skipped. Loss ties go to
/// the smaller beta.
pub fn estimate_t_es(
    candidates: &[HorizonCandidate],
    patience_fraction: f64,
    min_delta: f64,
) -> Result<HorizonEstimate> {
    let mut valid: Vec<&HorizonCandidate> = candidates
        .iter()
        .filter(|c| c.loss.is_finite() && !c.curves.is_empty())
        .collect();
    if valid.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need two betas with finite losses to estimate T_ES, have {}",
            valid.len()
        )));
    }
    valid.sort_by(|a, b| {
        a.loss
            .partial_cmp(&b.loss)
            .unwrap_or(Ordering::Equal)
            .then(a.beta.partial_cmp(&b.beta).unwrap_or(Ordering::Equal))
    });
    let first = stop_time(&valid[0].curves, patience_fraction, min_delta)?;
    let second = stop_time(&valid[1].curves, patience_fraction, min_delta)?;
    Ok(HorizonEstimate {
        t_es: t_es_from_stops(first, second)?,
        betas: [valid[0].beta, valid[1].beta],
        stop_steps: [first, second],
    })
}
