//! Charging prices for one training round.

use super::PricingScheme;
use crate::aggregation::aggregate_mean;
use crate::error::{Error, Result};
use crate::game::{BinaryType, BinaryTypeModel};

/// `beta_i * ||w_i - mean(all_w)||^2`.
pub fn penalty_term(w_i: &[f64], all_w: &[Vec<f64>], beta_i: f64) -> Result<f64> {
    if !(beta_i >= 0.0) {
        return Err(Error::domain(format!("beta must be nonnegative, got {beta_i}")));
    }
    let mean = aggregate_mean(all_w)?;
    if w_i.len() != mean.len() {
        return Err(Error::shape(format!("vector of dimension {} against mean of {}", w_i.len(), mean.len())));
    }
    Ok(beta_i * w_i.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
}

/// `r^x * p_N(N_L)` where `x` is the client's report and `N_L` the number of
/// low reports received.
pub fn reward_for_report(report: f64, all_reports: &[f64], rewards: (f64, f64), model: &BinaryTypeModel) -> Result<f64> {
    let own = model.label_of(report)?;
    if all_reports.len() != model.n_clients {
        return Err(Error::shape(format!(
            "{} reports for {} clients",
            all_reports.len(),
            model.n_clients
        )));
    }
    let mut low = 0;
    for r in all_reports {
        if model.label_of(*r)? == BinaryType::Low {
            low += 1;
        }
    }
    let coef = match own {
        BinaryType::Low => rewards.0,
        BinaryType::High => rewards.1,
    };
    Ok(coef * model.population_pmf()[low])
}

/// One round as seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub noisy_params: Vec<Vec<f64>>,
    /// Reported sensitivities; only read in incomplete mode.
    pub reports: Vec<f64>,
    /// Filled by [`apply_prices`].
    pub prices: Vec<f64>,
}

impl RoundOutcome {
    pub fn new(noisy_params: Vec<Vec<f64>>, reports: Vec<f64>) -> Self {
        RoundOutcome { noisy_params, reports, prices: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriceMode {
    /// Per-client penalties and compensation.
    Complete,
    /// Per-report penalties, rewards and compensation.
    Incomplete(BinaryTypeModel),
}

/// Fills `outcome.prices` with `penalty - reward - q`. Penalty coefficients
/// are divided by the parameter dimension so that the expected penalty under
/// isotropic noise matches the scalar calibration.
pub fn apply_prices(outcome: &mut RoundOutcome, scheme: &PricingScheme, mode: PriceMode) -> Result<()> {
    let n = outcome.noisy_params.len();
    let d = outcome.noisy_params.first().map(Vec::len).unwrap_or(0).max(1) as f64;
    let mut prices = Vec::with_capacity(n);
    for i in 0..n {
        let (beta, reward) = match mode {
            PriceMode::Complete => (scheme.beta_for_client(i)?, 0.0),
            PriceMode::Incomplete(model) => {
                if outcome.reports.len() != n {
                    return Err(Error::shape(format!("{} reports for {n} clients", outcome.reports.len())));
                }
                let label = model.label_of(outcome.reports[i])?;
                let r = reward_for_report(
                    outcome.reports[i],
                    &outcome.reports,
                    (scheme.reward_low, scheme.reward_high),
                    &model,
                )?;
                (scheme.beta_for_type(label)?, r)
            }
        };
        let pen = penalty_term(&outcome.noisy_params[i], &outcome.noisy_params, beta / d)?;
        prices.push(pen - reward - scheme.compensation);
    }
    outcome.prices = prices;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn penalty_examples() {
        let all = vec![vec![0.0], vec![2.0]];
        assert_eq!(penalty_term(&all[0], &all, 1.0).unwrap(), 1.0);
        assert_eq!(penalty_term(&all[1], &all, 1.0).unwrap(), 1.0);
        let same = vec![vec![1.5, -2.0]; 3];
        assert_eq!(penalty_term(&same[0], &same, 7.0).unwrap(), 0.0);
        assert!(penalty_term(&[1.0], &same, 1.0).is_err());
        let v = vec![vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.25, 4.0]];
        let mean: [f64; 2] = [(1.0 - 3.0 + 0.25) / 3.0, (2.0 + 0.5 + 4.0) / 3.0];
        let oracle = 0.7 * ((1.0 - mean[0]).powi(2) + (2.0 - mean[1]).powi(2));
        assert!((penalty_term(&v[0], &v, 0.7).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn reward_examples() {
        let m = BinaryTypeModel::new(0.25, 0.75, 0.5, 2).unwrap();
        let reports = [0.25, 0.75];
        assert!((reward_for_report(0.25, &reports, (2.0, 4.0), &m).unwrap() - 1.0).abs() < 1e-15);
        assert!((reward_for_report(0.75, &reports, (2.0, 4.0), &m).unwrap() - 2.0).abs() < 1e-15);
        let m4 = BinaryTypeModel::new(0.25, 0.75, 0.3, 4).unwrap();
        let high = [0.75; 4];
        let r = reward_for_report(0.75, &high, (1.0, 3.0), &m4).unwrap();
        assert!((r - 3.0 * 0.7f64.powi(4)).abs() < 1e-15);
        assert!(reward_for_report(0.5, &high, (1.0, 1.0), &m4).is_err());
        let a = reward_for_report(0.25, &[0.25, 0.25, 0.75, 0.75], (1.0, 1.0), &m4).unwrap();
        let b = reward_for_report(0.25, &[0.25, 0.75, 0.25, 0.75], (1.0, 1.0), &m4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_submissions_pay_minus_reward_and_q() {
        let m = BinaryTypeModel::new(0.25, 0.75, 0.5, 2).unwrap();
        let scheme = PricingScheme::per_type(3.0, 5.0).unwrap().with_rewards(2.0, 4.0).unwrap().with_compensation(0.5).unwrap();
        let mut o = RoundOutcome::new(vec![vec![1.0, 1.0]; 2], vec![0.25, 0.75]);
        apply_prices(&mut o, &scheme, PriceMode::Incomplete(m)).unwrap();
        assert_eq!(o.prices, vec![-1.0 - 0.5, -2.0 - 0.5]);
        let c = PricingScheme::per_client(vec![1.0, 1.0], 0.25).unwrap();
        let mut o = RoundOutcome::new(vec![vec![0.0], vec![2.0]], vec![]);
        apply_prices(&mut o, &c, PriceMode::Complete).unwrap();
        assert_eq!(o.prices, vec![0.75, 0.75]);
    }

    proptest! {
        #[test]
        fn translation_invariance(
            w in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..6),
            shift in prop::collection::vec(-100.0f64..100.0, 3),
            beta in 0.0f64..5.0,
        ) {
            let moved: Vec<Vec<f64>> = w.iter().map(|v| v.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect();
            for i in 0..w.len() {
                let a = penalty_term(&w[i], &w, beta).unwrap();
                let b = penalty_term(&moved[i], &moved, beta).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
