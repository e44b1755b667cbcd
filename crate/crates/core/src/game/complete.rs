//! Complete-information noise game: Nash equilibrium, social optimum, price
//! of anarchy and priced best-response dynamics.
//!
//! Both stationarity systems share the form
//! `kappa * w_i * s^(-3/2) * (Delta + L) / L = alpha_i * cS * sigma_i`
//! with `s = sum sigma^-2` and `Delta = s^(-1/2)`, where `w_i = 1 - alpha_i`
//! for the equilibrium and `w_i = sum_k (1 - alpha_k)` for the optimum. Hence
//! `sigma_i = (w_i / alpha_i) * G` for a common scale `G`, and the error
//! scale `u = Delta` solves `u^2 (u + L) = L cS sqrt(W) / kappa` with
//! `W = sum (alpha_i / w_i)^2`. That cubic has exactly one positive root.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{social_cost, GameParams, TypeProfile};
use crate::aggregation::{precision, NoiseProfile};
use crate::error::{Error, Result};
use crate::rootfind::{global_min_log, increasing_root, Tolerance};

/// Which stationarity system to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Each client minimizes its own cost.
    Nash,
    /// The planner minimizes the sum of costs.
    Social,
}

/// Outcome of [`price_of_anarchy`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub sigma_ne: NoiseProfile,
    pub sigma_so: NoiseProfile,
    pub sc_ne: f64,
    pub sc_opt: f64,
    pub gamma: f64,
    pub residual: f64,
}

fn check_interior(alphas: &TypeProfile) -> Result<()> {
    if let Some(a) = alphas.as_slice().iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::domain(format!("alpha {a} must lie strictly inside (0, 1)")));
    }
    Ok(())
}

fn foc_weights(alphas: &TypeProfile, objective: Objective) -> Vec<f64> {
    let total = alphas.accuracy_weight();
    alphas
        .as_slice()
        .iter()
        .map(|a| match objective {
            Objective::Nash => 1.0 - a,
            Objective::Social => total,
        })
        .collect()
}

/// Closed-form solution of the stationarity system through its scalar
/// reduction.
pub fn solve_complete(alphas: &TypeProfile, params: &GameParams, objective: Objective) -> Result<NoiseProfile> {
    check_interior(alphas)?;
    params.require_positive_kappa()?;
    let w = foc_weights(alphas, objective);
    let ratios: Vec<f64> = w.iter().zip(alphas.as_slice()).map(|(w, a)| w / a).collect();
    let big_w: f64 = ratios.iter().map(|r| r.powi(-2)).sum();
    let (l, kappa) = (params.l_smooth(), params.kappa());
    let rhs = l * params.cs() * big_w.sqrt() / kappa;
    let guess = rhs.cbrt().min((rhs / l).sqrt()).max(f64::MIN_POSITIVE);
    let u = increasing_root(|u| u * u * (u + l) - rhs, guess, Tolerance::default())?;
    let scale = u * big_w.sqrt();
    let sigma: Vec<f64> = ratios.iter().map(|r| r * scale).collect();
    params.check_in_bounds(&sigma, "complete-information solve")?;
    NoiseProfile::new(sigma)
}

pub fn solve_ne_complete(alphas: &TypeProfile, params: &GameParams) -> Result<NoiseProfile> {
    solve_complete(alphas, params, Objective::Nash)
}

/// Interior stationary point of the social cost. It is a saddle: moving all
/// precision onto one client and the rest to `sigma_max` costs less, because
/// privacy cost is concave in precision.
pub fn solve_so_complete(alphas: &TypeProfile, params: &GameParams) -> Result<NoiseProfile> {
    solve_complete(alphas, params, Objective::Social)
}

/// Relative residuals `(lhs - rhs) / max(lhs, rhs)` of the stationarity
/// system at `sigma`.
pub fn foc_residuals(alphas: &TypeProfile, sigma: &NoiseProfile, params: &GameParams, objective: Objective) -> Vec<f64> {
    let s = precision(sigma.as_slice());
    let delta = s.powf(-0.5);
    let l = params.l_smooth();
    let common = params.kappa() * s.powf(-1.5) * (delta + l) / l;
    foc_weights(alphas, objective)
        .iter()
        .zip(alphas.as_slice())
        .zip(sigma.as_slice())
        .map(|((w, a), sg)| {
            let lhs = common * w;
            let rhs = a * params.cs() * sg;
            (lhs - rhs) / lhs.abs().max(rhs.abs())
        })
        .collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `dJ_i / dsigma_i` in closed form.
pub fn client_cost_gradient(alpha_i: f64, sigma: &[f64], i: usize, params: &GameParams) -> f64 {
    let s = precision(sigma);
    let d_delta = s.powf(-1.5) * sigma[i].powi(-3);
    (1.0 - alpha_i) * params.accuracy_slope(s.powf(-0.5)) * d_delta - alpha_i * params.cs() / (sigma[i] * sigma[i])
}

/// `dSC / dsigma_i` in closed form.
pub fn social_cost_gradient(alphas: &TypeProfile, sigma: &[f64], i: usize, params: &GameParams) -> f64 {
    let s = precision(sigma);
    let d_delta = s.powf(-1.5) * sigma[i].powi(-3);
    let a = alphas.as_slice()[i];
    alphas.accuracy_weight() * params.accuracy_slope(s.powf(-0.5)) * d_delta - a * params.cs() / (sigma[i] * sigma[i])
}

/// Damped Newton iteration on the full N-dimensional stationarity system in
/// log coordinates. Independent of the scalar reduction; used to probe
/// uniqueness from arbitrary starts.
pub fn solve_complete_newton(
    alphas: &TypeProfile,
    params: &GameParams,
    objective: Objective,
    start: &[f64],
) -> Result<NoiseProfile> {
    check_interior(alphas)?;
    params.require_positive_kappa()?;
    if start.len() != alphas.len() {
        return Err(Error::shape("start and type profile differ in length"));
    }
    let (l, cs, kappa) = (params.l_smooth(), params.cs(), params.kappa());
    let ln_c: Vec<f64> = foc_weights(alphas, objective)
        .iter()
        .zip(alphas.as_slice())
        .map(|(w, a)| (kappa * w / (a * cs)).ln())
        .collect();
    // F_i(x) = ln c_i + g(s) - x_i with g(s) = -1.5 ln s + ln(1 + s^-1/2 / L)
    let g = |s: f64| -1.5 * s.ln() + (1.0 + s.powf(-0.5) / l).ln();
    let dg = |s: f64| -1.5 / s - 0.5 * s.powf(-1.5) / l / (1.0 + s.powf(-0.5) / l);
    let eval = |x: &[f64]| -> Vec<f64> {
        let s: f64 = x.iter().map(|xi| (-2.0 * xi).exp()).sum();
        let gs = g(s);
        x.iter().zip(&ln_c).map(|(xi, c)| c + gs - xi).collect()
    };
    let mut x: Vec<f64> = start.iter().map(|s| s.ln()).collect();
    let mut f = eval(&x);
    for _ in 0..500 {
        let norm = max_abs(&f);
        if norm < 1e-13 {
            let sigma = NoiseProfile::new(x.iter().map(|v| v.exp()).collect())?;
            params.check_in_bounds(sigma.as_slice(), "newton solve")?;
            return Ok(sigma);
        }
        // Jacobian = -I + g'(s) 1 b^T with b_j = -2 exp(-2 x_j); Sherman-Morrison
        let s: f64 = x.iter().map(|xi| (-2.0 * xi).exp()).sum();
        let gp = dg(s);
        let b: Vec<f64> = x.iter().map(|xi| -2.0 * (-2.0 * xi).exp()).collect();
        let vt_f: f64 = b.iter().zip(&f).map(|(b, f)| b * f).sum();
        let vt_u: f64 = gp * b.iter().sum::<f64>();
        let tau = vt_f / (1.0 - vt_u);
        let d: Vec<f64> = f.iter().map(|fi| fi + gp * tau).collect();
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + lambda * d).collect();
            let ft = eval(&trial);
            if max_abs(&ft) < norm || lambda < 1e-10 {
                x = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    Err(Error::Solver {
        message: "newton iteration limit on the stationarity system".into(),
        best: x.iter().map(|v| v.exp()).collect(),
        residual: max_abs(&f),
    })
}

/// Outcome of a multi-start uniqueness probe.
#[derive(Debug, Clone)]
pub struct UniquenessProbe {
    pub solutions: Vec<NoiseProfile>,
    /// Largest relative deviation of any multi-start solution from the
    /// closed-form one.
    pub max_spread: f64,
}

/// Runs [`solve_complete_newton`] from `starts` random profiles drawn
/// log-uniformly inside the sigma bounds and compares each result with the
/// closed-form solution.
pub fn probe_uniqueness(
    alphas: &TypeProfile,
    params: &GameParams,
    objective: Objective,
    starts: usize,
    seed: u64,
) -> Result<UniquenessProbe> {
    let reference = solve_complete(alphas, params, objective)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (params.sigma_bounds.0.ln(), params.sigma_bounds.1.ln());
    let mut solutions = Vec::with_capacity(starts);
    let mut spread: f64 = 0.0;
    for _ in 0..starts {
        let start: Vec<f64> = (0..alphas.len()).map(|_| rng.random_range(lo..hi).exp()).collect();
        let sol = solve_complete_newton(alphas, params, objective, &start)?;
        for (a, b) in sol.as_slice().iter().zip(reference.as_slice()) {
            spread = spread.max((a - b).abs() / b);
        }
        solutions.push(sol);
    }
    Ok(UniquenessProbe { solutions, max_spread: spread })
}

/// Equilibrium and optimum with their social costs and the ratio `gamma`.
pub fn price_of_anarchy(alphas: &TypeProfile, params: &GameParams) -> Result<EquilibriumResult> {
    let sigma_ne = solve_ne_complete(alphas, params)?;
    let sigma_so = solve_so_complete(alphas, params)?;
    let sc_ne = social_cost(alphas, &sigma_ne, params)?;
    let sc_opt = social_cost(alphas, &sigma_so, params)?;
    let residual = max_abs(&foc_residuals(alphas, &sigma_ne, params, Objective::Nash))
        .max(max_abs(&foc_residuals(alphas, &sigma_so, params, Objective::Social)));
    Ok(EquilibriumResult {
        sigma_ne,
        sigma_so,
        sc_ne,
        sc_opt,
        gamma: sc_ne / sc_opt,
        residual,
    })
}

/// `((N-1)/N)^2`, the own-noise weight in the expected squared deviation
/// from the average.
pub fn own_deviation_weight(n: usize) -> f64 {
    let n = n as f64;
    ((n - 1.0) / n).powi(2)
}

/// Expected squared deviation of client `i`'s noisy parameter from the
/// average of all noisy parameters.
pub fn expected_sq_deviation(sigma: &[f64], i: usize) -> f64 {
    let n = sigma.len() as f64;
    let others: f64 = sigma.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s * s).sum();
    own_deviation_weight(sigma.len()) * sigma[i] * sigma[i] + others / (n * n)
}

/// Client cost plus expected penalty `beta_i * E[(w_i - mean)^2]`.
pub fn priced_client_cost(alpha_i: f64, sigma: &[f64], i: usize, beta_i: f64, params: &GameParams) -> f64 {
    let s = precision(sigma);
    (1.0 - alpha_i) * params.accuracy(s.powf(-0.5))
        + alpha_i * params.cs() / sigma[i]
        + beta_i * expected_sq_deviation(sigma, i)
}

pub fn priced_client_gradient(alpha_i: f64, sigma: &[f64], i: usize, beta_i: f64, params: &GameParams) -> f64 {
    client_cost_gradient(alpha_i, sigma, i, params)
        + 2.0 * beta_i * own_deviation_weight(sigma.len()) * sigma[i]
}

/// Settings for [`best_response_dynamics`].
#[derive(Debug, Clone, Copy)]
pub struct DynamicsOptions {
    pub max_sweeps: usize,
    /// Converged when no coordinate moves by more than this (relative).
    pub tol: f64,
    /// Log-grid resolution of each one-dimensional best-response search.
    pub grid_points: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            max_sweeps: 500,
            tol: 1e-10,
            grid_points: 400,
        }
    }
}

/// Global minimizer of client `i`'s priced cost over the sigma bounds with
/// the other clients held fixed. The flag is set when the minimizer sits on
/// a bound.
pub fn best_response(alpha_i: f64, sigma: &[f64], i: usize, beta_i: f64, params: &GameParams, grid_points: usize) -> (f64, bool) {
    let (lo, hi) = params.sigma_bounds;
    let s0: f64 = sigma.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.powi(-2)).sum();
    let c2 = own_deviation_weight(sigma.len());
    let cs = params.cs();
    // constant terms dropped; only differences matter
    let cost = |x: f64| {
        let s = s0 + x.powi(-2);
        (1.0 - alpha_i) * params.accuracy(s.powf(-0.5)) + alpha_i * cs / x + beta_i * c2 * x * x
    };
    // x^2 * dcost/dx keeps the scan well scaled
    let scaled_grad = |x: f64| {
        let s = s0 + x.powi(-2);
        (1.0 - alpha_i) * params.accuracy_slope(s.powf(-0.5)) * s.powf(-1.5) / x - alpha_i * cs
            + 2.0 * beta_i * c2 * x.powi(3)
    };
    let m = global_min_log(cost, scaled_grad, lo, hi, grid_points, Tolerance::default());
    (m.x, m.at_bound)
}

/// Gauss-Seidel best-response dynamics on the priced game.
pub fn best_response_dynamics(
    alphas: &TypeProfile,
    betas: &[f64],
    params: &GameParams,
    start: &[f64],
    opts: DynamicsOptions,
) -> Result<NoiseProfile> {
    let n = alphas.len();
    if betas.len() != n || start.len() != n {
        return Err(Error::shape("betas, start and types must have equal length"));
    }
    let mut sigma = start.to_vec();
    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let (br, at_bound) = best_response(alphas.as_slice()[i], &sigma, i, betas[i], params, opts.grid_points);
            if at_bound {
                return Err(Error::Solver {
                    message: format!("best response of client {i} hits a sigma bound"),
                    best: sigma,
                    residual: f64::NAN,
                });
            }
            change = change.max((br - sigma[i]).abs() / sigma[i]);
            sigma[i] = br;
        }
        last_change = change;
        if change < opts.tol {
            return NoiseProfile::new(sigma);
        }
    }
    Err(Error::Solver {
        message: format!("best-response dynamics did not settle in {} sweeps", opts.max_sweeps),
        best: sigma,
        residual: last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::super::client_cost;
    use super::super::test_support::unit_params;
    use super::*;
    use proptest::prelude::*;

    fn types(v: &[f64]) -> TypeProfile {
        TypeProfile::new(v.to_vec(), 1e-4).unwrap()
    }

    #[test]
    fn symmetric_two_client_values() {
        // reference values from an independent scalar solve of the reduced cubic
        let p = unit_params();
        let t = types(&[0.5, 0.5]);
        let ne = solve_ne_complete(&t, &p).unwrap();
        let so = solve_so_complete(&t, &p).unwrap();
        assert!((ne.as_slice()[0] - 0.373_9).abs() < 1e-4, "{ne:?}");
        assert!((so.as_slice()[0] - 0.272_2).abs() < 1e-4, "{so:?}");
        assert!((ne.as_slice()[0] - ne.as_slice()[1]).abs() < 1e-12);
        let r = price_of_anarchy(&t, &p).unwrap();
        assert!((r.gamma - 1.058_8).abs() < 1e-4);
    }

    #[test]
    fn single_client_objectives_coincide() {
        let p = unit_params();
        let t = types(&[0.3]);
        let ne = solve_ne_complete(&t, &p).unwrap();
        let so = solve_so_complete(&t, &p).unwrap();
        assert!((ne.as_slice()[0] - so.as_slice()[0]).abs() < 1e-14);
        assert!((price_of_anarchy(&t, &p).unwrap().gamma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_stationarity() {
        let p = unit_params();
        let t = types(&[0.2, 0.45, 0.7, 0.9, 0.33]);
        let ne = solve_ne_complete(&t, &p).unwrap();
        let so = solve_so_complete(&t, &p).unwrap();
        for i in 0..5 {
            let h = 1e-6 * ne.as_slice()[i];
            let mut up = ne.as_slice().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let a = t.as_slice()[i];
            let fd = (client_cost(a, &NoiseProfile::new(up).unwrap(), i, &p).unwrap()
                - client_cost(a, &NoiseProfile::new(dn).unwrap(), i, &p).unwrap())
                / (2.0 * h);
            let scale = a * p.cs() / ne.as_slice()[i].powi(2);
            assert!(fd.abs() < 1e-6 * scale, "client {i}: {fd}");
            assert!(client_cost_gradient(a, ne.as_slice(), i, &p).abs() < 1e-10 * scale);
            assert!(social_cost_gradient(&t, so.as_slice(), i, &p).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn newton_agrees_with_reduction() {
        let p = unit_params();
        let t = types(&[0.1, 0.5, 0.95, 0.6]);
        for obj in [Objective::Nash, Objective::Social] {
            let probe = probe_uniqueness(&t, &p, obj, 8, 5).unwrap();
            assert!(probe.max_spread < 1e-9, "{obj:?}: {}", probe.max_spread);
        }
    }

    #[test]
    fn comparative_statics_on_alpha() {
        // frozen from an independent evaluation of the reduced cubic:
        // a higher alpha lowers the client's own sigma and raises the others'
        let p = unit_params();
        let base = solve_ne_complete(&types(&[0.3, 0.4, 0.5, 0.6, 0.7]), &p).unwrap();
        let up = solve_ne_complete(&types(&[0.35, 0.4, 0.5, 0.6, 0.7]), &p).unwrap();
        assert!((base.as_slice()[0] - 2.656_191_22).abs() < 1e-7);
        assert!((up.as_slice()[0] - 2.131_436_94).abs() < 1e-7);
        assert!((up.as_slice()[1] - 1.721_545_22).abs() < 1e-7);
        for i in 1..5 {
            assert!(up.as_slice()[i] > base.as_slice()[i]);
        }
    }

    #[test]
    fn boundary_solution_is_reported() {
        let p = unit_params().with_sigma_bounds(1.0, 2.0).unwrap();
        let err = solve_ne_complete(&types(&[0.5, 0.5]), &p).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }));
    }

    #[test]
    fn best_response_in_symmetric_priced_game() {
        // symmetric types: the symmetric beta makes the optimum stationary
        let p = unit_params();
        let t = types(&[0.5, 0.5, 0.5]);
        let so = solve_so_complete(&t, &p).unwrap();
        let n = 3.0f64;
        let s = so.as_slice()[0];
        let beta = n * 0.5 * p.cs() / (2.0 * (n - 1.0) * s.powi(3));
        let g = priced_client_gradient(0.5, so.as_slice(), 0, beta, &p);
        assert!(g.abs() < 1e-9 * p.cs() / (s * s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn permutation_equivariance(a in prop::collection::vec(0.05f64..0.95, 2..8), k in 0usize..8) {
            let p = unit_params();
            let n = a.len();
            let mut b = a.clone();
            b.rotate_left(k % n);
            let sa = solve_ne_complete(&types(&a), &p).unwrap();
            let sb = solve_ne_complete(&types(&b), &p).unwrap();
            let mut rot = sa.as_slice().to_vec();
            rot.rotate_left(k % n);
            for (x, y) in rot.iter().zip(sb.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x);
            }
        }

        #[test]
        fn optimum_beats_equilibrium(a in prop::collection::vec(0.05f64..0.95, 2..10)) {
            let p = unit_params();
            let r = price_of_anarchy(&types(&a), &p).unwrap();
            prop_assert!(r.gamma >= 1.0 - 1e-9);
            prop_assert!(r.residual <= 1e-9);
            for (ne, so) in r.sigma_ne.as_slice().iter().zip(r.sigma_so.as_slice()) {
                prop_assert!(so <= &(ne * (1.0 + 1e-12)));
            }
        }
    }
}
