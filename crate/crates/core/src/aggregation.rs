//! Server-side aggregation rules and the error scales that drive the
//! convergence bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-client Gaussian noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile(Vec<f64>);

impl NoiseProfile {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::shape("noise profile is empty"));
        }
        if let Some((i, s)) = sigmas.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
            return Err(Error::domain(format!("sigma[{i}] = {s} is not positive")));
        }
        Ok(NoiseProfile(sigmas))
    }

    pub fn uniform(n: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Smoothness, initial distance to the optimum, step size and round count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub l_smooth: f64,
    pub w0_dist: f64,
    pub step_size: f64,
    pub rounds: usize,
}

impl LearningConfig {
    /// Step size defaults to `1 / l_smooth`.
    pub fn new(l_smooth: f64, w0_dist: f64, rounds: usize) -> Result<Self> {
        if !(l_smooth > 0.0 && l_smooth.is_finite()) {
            return Err(Error::domain(format!("l_smooth must be positive, got {l_smooth}")));
        }
        if !(w0_dist >= 0.0 && w0_dist.is_finite()) {
            return Err(Error::domain(format!("w0_dist must be nonnegative, got {w0_dist}")));
        }
        if rounds == 0 {
            return Err(Error::domain("rounds must be at least 1"));
        }
        Ok(LearningConfig {
            l_smooth,
            w0_dist,
            step_size: 1.0 / l_smooth,
            rounds,
        })
    }

    pub fn with_step_size(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::domain(format!("step size must be positive, got {step}")));
        }
        self.step_size = step;
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        16.0 * self.w0_dist
    }
}

fn check_shapes(params: &[Vec<f64>]) -> Result<usize> {
    let first = params.first().ok_or_else(|| Error::shape("no parameter vectors"))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::shape("parameter vectors have dimension 0"));
    }
    for (i, p) in params.iter().enumerate() {
        if p.len() != d {
            return Err(Error::shape(format!("vector {i} has dimension {} (expected {d})", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("vector {i} has a non-finite entry")));
        }
    }
    Ok(d)
}

/// Weighted sum in client order; weights must already be normalized.
fn weighted_sum(params: &[Vec<f64>], weights: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (p, &w) in params.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    out
}

pub fn aggregate_mean(params: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = check_shapes(params)?;
    let n = params.len() as f64;
    let mut out = vec![0.0; d];
    for p in params {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Normalized inverse-variance weights.
pub fn mle_weights(noise: &NoiseProfile) -> Vec<f64> {
    let inv: Vec<f64> = noise.as_slice().iter().map(|s| s.powi(-2)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|w| w / total).collect()
}

/// Inverse-variance weighted mean.
pub fn aggregate_mle(params: &[Vec<f64>], noise: &NoiseProfile) -> Result<Vec<f64>> {
    let d = check_shapes(params)?;
    if noise.len() != params.len() {
        return Err(Error::shape(format!(
            "{} parameter vectors but {} noise levels",
            params.len(),
            noise.len()
        )));
    }
    Ok(weighted_sum(params, &mle_weights(noise), d))
}

/// `(sum sigma^-2)^(-1/2)`.
pub fn delta_mle(noise: &NoiseProfile) -> f64 {
    precision(noise.as_slice()).powf(-0.5)
}

/// Standard deviation of the plain mean: `sqrt(sum sigma^2) / N`.
pub fn delta_mean(noise: &NoiseProfile) -> f64 {
    let s = noise.as_slice();
    s.iter().map(|x| x * x).sum::<f64>().sqrt() / s.len() as f64
}

/// Total precision `sum sigma^-2`.
pub fn precision(sigmas: &[f64]) -> f64 {
    sigmas.iter().map(|s| s.powi(-2)).sum()
}

/// Error scale when the server weights by `presumed` noise levels while the
/// clients actually add `actual`. Equals the standard deviation of the
/// misweighted estimator.
pub fn delta_incomplete(actual: &NoiseProfile, presumed: &NoiseProfile) -> Result<f64> {
    if actual.len() != presumed.len() {
        return Err(Error::shape(format!(
            "actual has {} entries, presumed has {}",
            actual.len(),
            presumed.len()
        )));
    }
    let (a, p) = (actual.as_slice(), presumed.as_slice());
    let num: f64 = a.iter().zip(p).map(|(a, p)| a * a / p.powi(4)).sum();
    Ok(num.sqrt() / precision(p))
}

/// `kappa * delta * (1 + delta / (2 L))`.
pub fn convergence_bound(delta: f64, cfg: &LearningConfig) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(cfg.kappa() * delta * (1.0 + delta / (2.0 * cfg.l_smooth)))
}
