//! Gaussian-mechanism noise calibration and the per-client privacy-loss bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise multiplier `c`, sensitivity `S` and failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    c: f64,
    sensitivity: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(c: f64, sensitivity: f64, delta: f64) -> Result<Self> {
        let c_min = min_noise_multiplier(delta)?;
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::domain(format!("sensitivity must be positive, got {sensitivity}")));
        }
        if !(c.is_finite() && c >= c_min) {
            return Err(Error::domain(format!(
                "noise multiplier {c} below the minimum {c_min} for delta = {delta}"
            )));
        }
        Ok(PrivacyParams { c, sensitivity, delta })
    }

    /// Uses the smallest admissible multiplier for `delta`.
    pub fn minimal(sensitivity: f64, delta: f64) -> Result<Self> {
        Self::new(min_noise_multiplier(delta)?, sensitivity, delta)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The product `c * S` that scales every privacy term.
    pub fn cs(&self) -> f64 {
        self.c * self.sensitivity
    }
}

/// A per-round privacy budget `epsilon` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget(f64);

impl EpsilonBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon < 1.0 {
            Ok(EpsilonBudget(epsilon))
        } else {
            Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Smallest noise multiplier allowed for `delta`: `sqrt(2 ln(1.25 / delta))`.
pub fn min_noise_multiplier(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt())
}

pub fn sigma_for_epsilon(p: &PrivacyParams, eps: EpsilonBudget) -> f64 {
    p.cs() / eps.value()
}

/// Privacy-loss bound `c S / sigma`.
pub fn privacy_loss_bound(sigma: f64, p: &PrivacyParams) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(p.cs() / sigma)
}
