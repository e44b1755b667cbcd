//! Complete-information penalties that make the social optimum each
//! client's stationary point, and the compensation that balances the budget.

use rand_distr::{Distribution, StandardNormal};

use super::PricingScheme;
use crate::aggregation::NoiseProfile;
use crate::error::{Error, Result};
use crate::game::{expected_sq_deviation, priced_client_cost, GameParams, TypeProfile};
use crate::montecarlo::{estimate, Estimate};
use crate::par::Execution;

/// Closed-form coefficients
/// `N^2 sum_{j != i} (1 - a_j) a_j cS / (2 (N-1)^2 sum_k (1 - a_k) sigma_k^3)`.
pub fn closed_form_complete_betas(alphas: &TypeProfile, sigma_so: &NoiseProfile, params: &GameParams) -> Vec<f64> {
    let a = alphas.as_slice();
    let s = sigma_so.as_slice();
    let n = a.len() as f64;
    let denom: f64 = a.iter().zip(s).map(|(a, s)| (1.0 - a) * s.powi(3)).sum();
    let weighted: Vec<f64> = a.iter().map(|a| (1.0 - a) * a).collect();
    let total: f64 = weighted.iter().sum();
    weighted
        .iter()
        .map(|w| n * n * (total - w) * params.cs() / (2.0 * (n - 1.0).powi(2) * denom))
        .collect()
}

/// Coefficients obtained by subtracting each client's own stationarity
/// condition from the planner's at the optimum:
/// `N^2 a_i cS sum_{k != i} (1 - a_k) / (2 (N-1)^2 A sigma_i^3)`.
pub fn stationary_complete_betas(alphas: &TypeProfile, sigma_so: &NoiseProfile, params: &GameParams) -> Vec<f64> {
    let a = alphas.as_slice();
    let n = a.len() as f64;
    let big_a = alphas.accuracy_weight();
    a.iter()
        .zip(sigma_so.as_slice())
        .map(|(ai, s)| n * n * ai * params.cs() * (big_a - (1.0 - ai)) / (2.0 * (n - 1.0).powi(2) * big_a * s.powi(3)))
        .collect()
}

/// Largest `|dJ_i^priced/dsigma_i| sigma_i^2 / (alpha_i cS)` over clients, by
/// central differences at `sigma`.
pub fn priced_stationarity(alphas: &TypeProfile, sigma: &NoiseProfile, betas: &[f64], params: &GameParams) -> f64 {
    let s = sigma.as_slice();
    let mut worst: f64 = 0.0;
    for (i, (&a, &b)) in alphas.as_slice().iter().zip(betas).enumerate() {
        let h = 1e-6 * s[i];
        let mut up = s.to_vec();
        let mut dn = s.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fd = (priced_client_cost(a, &up, i, b, params) - priced_client_cost(a, &dn, i, b, params)) / (2.0 * h);
        worst = worst.max(fd.abs() * s[i] * s[i] / (a * params.cs()));
    }
    worst
}

/// `(1/N) sum_i beta_i E[(w_i - mean)^2]`.
pub fn balanced_compensation(sigma: &[f64], betas: &[f64]) -> f64 {
    let n = sigma.len();
    (0..n).map(|i| betas[i] * expected_sq_deviation(sigma, i)).sum::<f64>() / n as f64
}

/// Everything [`design_complete_report`] computed along the way.
#[derive(Debug, Clone)]
pub struct CompleteDesign {
    pub scheme: PricingScheme,
    pub closed_form_betas: Vec<f64>,
    /// The closed-form coefficients passed validation and were kept.
    pub used_closed_form: bool,
    /// Stationarity measure of the closed-form coefficients.
    pub closed_form_stationarity: f64,
    /// Stationarity measure of the coefficients in the scheme.
    pub stationarity: f64,
    /// `(2 (N-1)^2 / N) sum beta_i sigma_i`, the closed-form compensation.
    pub closed_form_compensation: f64,
    /// Balanced compensation divided by the closed-form one.
    pub compensation_ratio: f64,
}

pub const STATIONARITY_TOL: f64 = 1e-5;

/// Penalties and compensation for complete information. The closed-form
/// coefficients are tried first and replaced by the stationary ones when
/// they fail the stationarity check at `sigma_so`.
pub fn design_complete_report(alphas: &TypeProfile, sigma_so: &NoiseProfile, params: &GameParams) -> Result<CompleteDesign> {
    let n = alphas.len();
    if n < 2 || sigma_so.len() != n {
        return Err(Error::shape("need at least two clients and one sigma per client"));
    }
    let closed_form = closed_form_complete_betas(alphas, sigma_so, params);
    let closed_form_stationarity = priced_stationarity(alphas, sigma_so, &closed_form, params);
    let (betas, used_closed_form, stationarity) = if closed_form_stationarity <= STATIONARITY_TOL {
        (closed_form.clone(), true, closed_form_stationarity)
    } else {
        let b = stationary_complete_betas(alphas, sigma_so, params);
        let st = priced_stationarity(alphas, sigma_so, &b, params);
        if st > STATIONARITY_TOL {
            return Err(Error::Construction(format!(
                "no penalty vector makes the optimum stationary (closed-form {closed_form_stationarity:e}, derived {st:e})"
            )));
        }
        (b, false, st)
    };
    let s = sigma_so.as_slice();
    let q = balanced_compensation(s, &betas);
    let nf = n as f64;
    let closed_form_q = 2.0 * (nf - 1.0).powi(2) / nf * betas.iter().zip(s).map(|(b, s)| b * s).sum::<f64>();
    let scheme = PricingScheme::per_client(betas, q)?.with_calibration(s.to_vec());
    Ok(CompleteDesign {
        scheme,
        closed_form_betas: closed_form,
        used_closed_form,
        closed_form_stationarity,
        stationarity,
        closed_form_compensation: closed_form_q,
        compensation_ratio: q / closed_form_q,
    })
}

pub fn design_complete(alphas: &TypeProfile, sigma_so: &NoiseProfile, params: &GameParams) -> Result<PricingScheme> {
    Ok(design_complete_report(alphas, sigma_so, params)?.scheme)
}

/// Monte-Carlo estimate of `sum_i P_i` for scalar parameters perturbed by
/// independent Gaussian noise of the given levels.
pub fn budget_check_complete(
    sigma: &NoiseProfile,
    scheme: &PricingScheme,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    let s = sigma.as_slice();
    let n = s.len();
    let betas: Vec<f64> = (0..n).map(|i| scheme.beta_for_client(i)).collect::<Result<_>>()?;
    let q = scheme.compensation;
    Ok(estimate(draws, seed, exec, |rng| {
        let w: Vec<f64> = s
            .iter()
            .map(|sd| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        let mean = w.iter().sum::<f64>() / n as f64;
        w.iter().zip(&betas).map(|(wi, b)| b * (wi - mean).powi(2) - q).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{best_response_dynamics, solve_so_complete, DynamicsOptions};
    use crate::game::test_support::unit_params;

    fn types(v: &[f64]) -> TypeProfile {
        TypeProfile::new(v.to_vec(), 1e-4).unwrap()
    }

    #[test]
    fn symmetric_betas_coincide() {
        let p = unit_params();
        let t = types(&[0.5, 0.5]);
        let so = solve_so_complete(&t, &p).unwrap();
        let d = design_complete_report(&t, &so, &p).unwrap();
        assert!(d.used_closed_form);
        let b = match &d.scheme.penalties {
            super::super::Penalties::PerClient { betas } => betas.clone(),
            _ => unreachable!(),
        };
        assert!((b[0] - b[1]).abs() < 1e-15 * b[0]);
    }

    #[test]
    fn asymmetric_types_use_stationary_betas() {
        let p = unit_params();
        let t = types(&[0.2, 0.5, 0.8]);
        let so = solve_so_complete(&t, &p).unwrap();
        let d = design_complete_report(&t, &so, &p).unwrap();
        assert!(!d.used_closed_form);
        assert!(d.closed_form_stationarity > 1e-3);
        assert!(d.stationarity <= STATIONARITY_TOL);
    }

    #[test]
    fn priced_dynamics_reach_optimum_symmetric() {
        let p = unit_params();
        let t = types(&[0.5, 0.5, 0.5, 0.5]);
        let so = solve_so_complete(&t, &p).unwrap();
        let scheme = design_complete(&t, &so, &p).unwrap();
        let betas: Vec<f64> = (0..4).map(|i| scheme.beta_for_client(i).unwrap()).collect();
        let out = best_response_dynamics(&t, &betas, &p, &[0.01, 3.0, 0.5, 20.0], DynamicsOptions::default()).unwrap();
        for (a, b) in out.as_slice().iter().zip(so.as_slice()) {
            assert!((a - b).abs() < 1e-6 * b);
        }
    }

    #[test]
    fn compensation_balances_budget() {
        let p = unit_params();
        let t = types(&[0.3, 0.6, 0.7, 0.4, 0.5]);
        let so = solve_so_complete(&t, &p).unwrap();
        let scheme = design_complete(&t, &so, &p).unwrap();
        let e = budget_check_complete(&so, &scheme, 100_000, 17, Execution::Parallel).unwrap();
        assert!(e.within(0.0, 3.0), "{e:?}");
        let zero = PricingScheme::per_client(vec![0.0; 5], 0.0).unwrap();
        assert_eq!(budget_check_complete(&so, &zero, 1000, 1, Execution::Sequential).unwrap().mean, 0.0);
    }
}
