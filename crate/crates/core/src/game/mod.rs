//! Client costs, social cost, the complete-information game and the
//! binary-type Bayesian game.

mod binary;
mod complete;

pub use binary::*;
pub use complete::*;

use serde::{Deserialize, Serialize};

use crate::aggregation::{convergence_bound, delta_mle, LearningConfig, NoiseProfile};
use crate::error::{Error, Result};
use crate::privacy::{privacy_loss_bound, PrivacyParams};

pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-4;
pub const DEFAULT_SIGMA_BOUNDS: (f64, f64) = (1e-6, 1e6);

/// Everything the cost functions need besides the types and noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub privacy: PrivacyParams,
    pub learning: LearningConfig,
    pub sigma_bounds: (f64, f64),
    pub alpha_floor: f64,
}

impl GameParams {
    pub fn new(privacy: PrivacyParams, learning: LearningConfig) -> Self {
        GameParams {
            privacy,
            learning,
            sigma_bounds: DEFAULT_SIGMA_BOUNDS,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
        }
    }

    pub fn with_sigma_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::domain(format!("invalid sigma bounds [{lo}, {hi}]")));
        }
        self.sigma_bounds = (lo, hi);
        Ok(self)
    }

    pub fn with_alpha_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor < 0.5) {
            return Err(Error::domain(format!("alpha floor must lie in (0, 0.5), got {floor}")));
        }
        self.alpha_floor = floor;
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        self.learning.kappa()
    }

    pub fn l_smooth(&self) -> f64 {
        self.learning.l_smooth
    }

    pub fn cs(&self) -> f64 {
        self.privacy.cs()
    }

    /// Accuracy loss `kappa * d * (1 + d / (2 L))` for error scale `d`.
    pub fn accuracy(&self, delta: f64) -> f64 {
        self.kappa() * delta * (1.0 + delta / (2.0 * self.l_smooth()))
    }

    /// Derivative of [`accuracy`](Self::accuracy) in the error scale.
    pub fn accuracy_slope(&self, delta: f64) -> f64 {
        self.kappa() * (1.0 + delta / self.l_smooth())
    }

    pub fn require_positive_kappa(&self) -> Result<()> {
        if self.kappa() > 0.0 {
            Ok(())
        } else {
            Err(Error::domain("kappa = 16 * w0_dist must be positive for the noise game"))
        }
    }

    pub fn check_in_bounds(&self, sigma: &[f64], what: &str) -> Result<()> {
        let (lo, hi) = self.sigma_bounds;
        if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s >= lo && **s <= hi)) {
            return Err(Error::Solver {
                message: format!("{what}: boundary solution, sigma[{i}] = {s:e} outside [{lo:e}, {hi:e}]"),
                best: sigma.to_vec(),
                residual: f64::NAN,
            });
        }
        Ok(())
    }
}

/// Per-client privacy sensitivities, clamped to `[floor, 1 - floor]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile(Vec<f64>);

impl TypeProfile {
    pub fn new(alphas: Vec<f64>, floor: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::shape("type profile is empty"));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::domain(format!("alpha {a} outside [0, 1]")));
        }
        Ok(TypeProfile(
            alphas.into_iter().map(|a| a.clamp(floor, 1.0 - floor)).collect(),
        ))
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

    /// `sum (1 - alpha_i)`.
    pub fn accuracy_weight(&self) -> f64 {
        self.0.iter().map(|a| 1.0 - a).sum()
    }
}

/// Cost of client `i`: accuracy loss weighted by `1 - alpha_i` plus the
/// privacy-loss bound weighted by `alpha_i`.
pub fn client_cost(alpha_i: f64, sigma: &NoiseProfile, i: usize, params: &GameParams) -> Result<f64> {
    let s = sigma
        .as_slice()
        .get(i)
        .ok_or_else(|| Error::shape(format!("client {i} out of range for N = {}", sigma.len())))?;
    let acc = convergence_bound(delta_mle(sigma), &params.learning)?;
    Ok((1.0 - alpha_i) * acc + alpha_i * privacy_loss_bound(*s, &params.privacy)?)
}

/// Sum of client costs; prices are transfers and are left out.
pub fn social_cost(alphas: &TypeProfile, sigma: &NoiseProfile, params: &GameParams) -> Result<f64> {
    if alphas.len() != sigma.len() {
        return Err(Error::shape(format!(
            "{} types but {} noise levels",
            alphas.len(),
            sigma.len()
        )));
    }
    let acc = convergence_bound(delta_mle(sigma), &params.learning)?;
    let cs = params.cs();
    Ok(alphas
        .as_slice()
        .iter()
        .zip(sigma.as_slice())
        .map(|(a, s)| (1.0 - a) * acc + a * cs / s)
        .sum())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// kappa = 16, L = 1, c = S = 1.
    pub fn unit_params() -> GameParams {
        let privacy = PrivacyParams::new(1.0, 1.0, 0.9).unwrap();
        let learning = LearningConfig::new(1.0, 1.0, 30).unwrap();
        GameParams::new(privacy, learning)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::unit_params;
    use super::*;

    #[test]
    fn cost_examples() {
        let p = unit_params();
        let s = NoiseProfile::new(vec![1.0, 1.0]).unwrap();
        let c = client_cost(0.5, &s, 0, &p).unwrap();
        let d = 0.5f64.sqrt();
        let oracle = 0.5 * 16.0 * d * (1.0 + d / 2.0) + 0.5;
        assert!((c - oracle).abs() < 1e-12);
        assert!((c - 8.157).abs() < 1e-3);
        assert!((client_cost(1.0, &s, 1, &p).unwrap() - 1.0).abs() < 1e-15);
        let t = NoiseProfile::new(vec![0.3, 2.0]).unwrap();
        let a0 = client_cost(0.0, &t, 0, &p).unwrap();
        let a1 = client_cost(0.0, &t, 1, &p).unwrap();
        assert_eq!(a0, a1);
        assert!(client_cost(0.5, &t, 2, &p).is_err());
    }

    #[test]
    fn social_cost_is_loop_sum() {
        let p = unit_params();
        let a = TypeProfile::new(vec![0.1, 0.5, 0.8], 1e-4).unwrap();
        let s = NoiseProfile::new(vec![0.5, 1.5, 3.0]).unwrap();
        let sc = social_cost(&a, &s, &p).unwrap();
        let mut oracle = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            let c = client_cost(a.as_slice()[i], &s, i, &p).unwrap();
            oracle += c;
            worst = worst.max(c);
        }
        assert!((sc - oracle).abs() < 1e-12 * oracle);
        assert!(sc >= worst);
        let b = TypeProfile::new(vec![0.5, 0.5], 1e-4).unwrap();
        let u = NoiseProfile::new(vec![1.0, 1.0]).unwrap();
        let two = 2.0 * client_cost(0.5, &u, 0, &p).unwrap();
        assert!((social_cost(&b, &u, &p).unwrap() - two).abs() < 1e-12);
        assert!(social_cost(&b, &s, &p).is_err());
    }

    #[test]
    fn types_are_clamped() {
        let t = TypeProfile::new(vec![0.0, 1.0, 0.3], 1e-4).unwrap();
        assert_eq!(t.as_slice(), &[1e-4, 1.0 - 1e-4, 0.3]);
        assert!(TypeProfile::new(vec![1.2], 1e-4).is_err());
    }
}
