use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BinaryType, TypeStrategy};

/// Penalty coefficients: one per client under complete information, one per
/// reported type under incomplete information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalties {
    PerClient { betas: Vec<f64> },
    PerType { low: f64, high: f64 },
}

/// Penalties, truthfulness rewards and the flat compensation payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingScheme {
    pub reward_low: f64,
    pub reward_high: f64,
    pub compensation: f64,
    /// Noise levels the coefficients were calibrated to: one per client, or
    /// `[low, high]` for a per-type scheme. Empty when uncalibrated.
    pub calibrated_sigma: Vec<f64>,
    /// Seed of any Monte-Carlo estimate used to build the scheme.
    pub seed: Option<u64>,
    pub penalties: Penalties,
}

impl PricingScheme {
    /// A per-type scheme with every coefficient zero.
    pub fn zero_binary() -> Self {
        PricingScheme {
            reward_low: 0.0,
            reward_high: 0.0,
            compensation: 0.0,
            calibrated_sigma: Vec::new(),
            seed: None,
            penalties: Penalties::PerType { low: 0.0, high: 0.0 },
        }
    }

    pub fn per_type(beta_low: f64, beta_high: f64) -> Result<Self> {
        check_nonneg("beta", &[beta_low, beta_high])?;
        Ok(PricingScheme {
            penalties: Penalties::PerType { low: beta_low, high: beta_high },
            ..Self::zero_binary()
        })
    }

    pub fn per_client(betas: Vec<f64>, compensation: f64) -> Result<Self> {
        check_nonneg("beta", &betas)?;
        Ok(PricingScheme {
            compensation,
            penalties: Penalties::PerClient { betas },
            ..Self::zero_binary()
        })
    }

    pub fn with_rewards(mut self, low: f64, high: f64) -> Result<Self> {
        check_nonneg("reward", &[low, high])?;
        self.reward_low = low;
        self.reward_high = high;
        Ok(self)
    }

    pub fn with_compensation(mut self, q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::domain(format!("compensation must be finite, got {q}")));
        }
        self.compensation = q;
        Ok(self)
    }

    pub fn with_calibration(mut self, sigma: Vec<f64>) -> Self {
        self.calibrated_sigma = sigma;
        self
    }

    pub fn beta_for_type(&self, t: BinaryType) -> Result<f64> {
        match self.penalties {
            Penalties::PerType { low, high } => Ok(match t {
                BinaryType::Low => low,
                BinaryType::High => high,
            }),
            Penalties::PerClient { .. } => Err(Error::domain("per-client scheme has no per-type penalties")),
        }
    }

    pub fn beta_for_client(&self, i: usize) -> Result<f64> {
        match &self.penalties {
            Penalties::PerClient { betas } => betas
                .get(i)
                .copied()
                .ok_or_else(|| Error::shape(format!("no penalty for client {i}"))),
            Penalties::PerType { .. } => Err(Error::domain("per-type scheme has no per-client penalties")),
        }
    }

    pub fn reward_for_type(&self, t: BinaryType) -> f64 {
        match t {
            BinaryType::Low => self.reward_low,
            BinaryType::High => self.reward_high,
        }
    }

    /// The per-type strategy this scheme was calibrated to, if any.
    pub fn calibrated_strategy(&self) -> Option<TypeStrategy> {
        match (&self.penalties, self.calibrated_sigma.as_slice()) {
            (Penalties::PerType { .. }, [low, high]) => Some(TypeStrategy { low: *low, high: *high }),
            _ => None,
        }
    }

    /// Serializes to a TOML document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize pricing scheme: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: PricingScheme = toml::from_str(text).map_err(|e| Error::Config(format!("bad pricing scheme: {e}")))?;
        match &s.penalties {
            Penalties::PerClient { betas } => check_nonneg("beta", betas)?,
            Penalties::PerType { low, high } => check_nonneg("beta", &[*low, *high])?,
        }
        check_nonneg("reward", &[s.reward_low, s.reward_high])?;
        Ok(s)
    }
}

fn check_nonneg(what: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        Some(x) => Err(Error::domain(format!("{what} must be nonnegative and finite, got {x}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_exact() {
        let s = PricingScheme::per_type(0.123_456_789_012_345_6, 3.5e-7)
            .unwrap()
            .with_rewards(1.0 / 3.0, 0.0)
            .unwrap()
            .with_compensation(-2.25)
            .unwrap()
            .with_calibration(vec![1.1, 0.3]);
        let s = PricingScheme { seed: Some(42), ..s };
        let text = s.to_toml().unwrap();
        assert_eq!(PricingScheme::from_toml(&text).unwrap(), s);
        let c = PricingScheme::per_client(vec![0.1, 0.2, 1e-300], 4.0).unwrap();
        assert_eq!(PricingScheme::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn rejects_negative_coefficients() {
        assert!(PricingScheme::per_type(-1.0, 0.0).is_err());
        assert!(PricingScheme::zero_binary().with_rewards(0.0, -1e-3).is_err());
        let bad = "reward_low = 0.0\nreward_high = 0.0\ncompensation = 0.0\ncalibrated_sigma = []\n[penalties]\nkind = \"per_type\"\nlow = -1.0\nhigh = 0.0\n";
        assert!(PricingScheme::from_toml(bad).is_err());
    }
}
