//! Incomplete-information mechanism for the binary-type model: per-type
//! penalties, truthfulness rewards and the budget-balancing compensation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PricingScheme;
use crate::error::{Error, Result};
use crate::game::{
    expected_cost_parts, expected_social_cost, nearest_ratio, own_deviation_weight, scan_two_type,
    solve_bne_case, BinaryType, BinaryTypeModel, BneResult, GameParams, RatioScan, ReportingCase, ScaledCondition,
    TypeStrategy,
};
use crate::montecarlo::{estimate, Estimate};
use crate::par::Execution;

fn sum_weight(x: f64, l: f64) -> f64 {
    (1.0 + x.powf(-0.5) / l) * x.powf(-1.5)
}

/// Precision of a low-type client's view when `n` others are low.
fn x_low(n: usize, n_clients: usize, so: TypeStrategy) -> f64 {
    (n + 1) as f64 * so.low.powi(-2) + (n_clients - 1 - n) as f64 * so.high.powi(-2)
}

/// Precision of a high-type client's view when `n` others are low.
fn x_high(n: usize, n_clients: usize, so: TypeStrategy) -> f64 {
    n as f64 * so.low.powi(-2) + (n_clients - n) as f64 * so.high.powi(-2)
}

fn check_eta(model: &BinaryTypeModel) -> Result<()> {
    if model.eta > 0.0 && model.eta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("eta must lie in (0, 1), got {}", model.eta)))
    }
}

/// Closed-form per-type coefficients, with population weights
/// `p(n) = C(N, n) eta^n (1 - eta)^(N - n)`.
pub fn closed_form_incomplete_betas(model: &BinaryTypeModel, so: TypeStrategy, params: &GameParams) -> Result<(f64, f64)> {
    check_eta(model)?;
    let n_clients = model.n_clients;
    let nf = n_clients as f64;
    let (eta, l, kappa) = (model.eta, params.l_smooth(), params.kappa());
    let p = model.population_pmf();
    let (mut l1, mut l2, mut h1, mut h2) = (0.0, 0.0, 0.0, 0.0);
    for n in 0..n_clients {
        let f1 = sum_weight(x_low(n, n_clients, so), l);
        let f2 = sum_weight(x_high(n, n_clients, so), l);
        l1 += p[n] * n as f64 * f1;
        l2 += p[n] * n as f64 * f2;
        h1 += p[n] * (nf - 1.0 - n as f64) * f1;
        h2 += p[n] * (nf - n as f64) * f2;
    }
    let lead = kappa * nf * nf / (2.0 * (nf - 1.0).powi(2));
    let (al, ah) = (model.alpha_low, model.alpha_high);
    let beta_low = lead / so.low.powi(4) * ((1.0 - al) * l1 + (1.0 - eta) / eta * (1.0 - ah) * l2);
    let beta_high = lead / so.high.powi(4) * (eta / (1.0 - eta) * (1.0 - al) * h1 + (1.0 - ah) * h2);
    Ok((beta_low, beta_high))
}

/// Coefficients that make `so` stationary for truthful clients: the gap
/// between the planner's and the client's marginal accuracy value.
pub fn stationary_incomplete_betas(model: &BinaryTypeModel, so: TypeStrategy, params: &GameParams) -> Result<(f64, f64)> {
    check_eta(model)?;
    let n_clients = model.n_clients;
    let nf = n_clients as f64;
    let l = params.l_smooth();
    let (al, ah) = (model.alpha_low, model.alpha_high);
    let (mut bl, mut bh) = (0.0, 0.0);
    for (n, pn) in model.others_pmf().iter().enumerate() {
        let others = n as f64 * (1.0 - al) + (nf - 1.0 - n as f64) * (1.0 - ah);
        bl += pn * others * sum_weight(x_low(n, n_clients, so), l);
        bh += pn * others * sum_weight(x_high(n, n_clients, so), l);
    }
    let lead = params.kappa() * nf * nf / (2.0 * (nf - 1.0).powi(2));
    Ok((lead * bl / so.low.powi(4), lead * bh / so.high.powi(4)))
}

/// Max over types of the scaled truthful first-order residual at `so` when
/// the per-type penalties are `betas`; measured by central differences.
pub fn truthful_stationarity(model: &BinaryTypeModel, so: TypeStrategy, betas: (f64, f64), params: &GameParams) -> Result<f64> {
    let scheme = PricingScheme::per_type(betas.0, betas.1)?;
    let mut worst: f64 = 0.0;
    for t in BinaryType::BOTH {
        let s = so.get(t);
        let h = 1e-6 * s;
        let f = |x: f64| {
            expected_cost_parts(t, t, x, so, ReportingCase::Truthful, model, &scheme, params).map(|p| p.total())
        };
        let fd = (f(s + h)? - f(s - h)?) / (2.0 * h);
        worst = worst.max(fd.abs() * s * s / (model.alpha(t) * params.cs()));
    }
    Ok(worst)
}

/// Result of [`design_incomplete_betas_report`].
#[derive(Debug, Clone, Copy)]
pub struct BetaDesign {
    pub betas: (f64, f64),
    pub closed_form: (f64, f64),
    pub used_closed_form: bool,
    pub closed_form_stationarity: f64,
    pub stationarity: f64,
}

pub const INCOMPLETE_STATIONARITY_TOL: f64 = 1e-6;

/// Tries the closed-form per-type penalties and falls back to the stationary
/// ones when the closed-form pair does not make `so` a truthful equilibrium.
pub fn design_incomplete_betas_report(model: &BinaryTypeModel, so: TypeStrategy, params: &GameParams) -> Result<BetaDesign> {
    let closed_form = closed_form_incomplete_betas(model, so, params)?;
    let closed_form_stationarity = truthful_stationarity(model, so, closed_form, params)?;
    if closed_form_stationarity <= INCOMPLETE_STATIONARITY_TOL {
        return Ok(BetaDesign {
            betas: closed_form,
            closed_form,
            used_closed_form: true,
            closed_form_stationarity,
            stationarity: closed_form_stationarity,
        });
    }
    let betas = stationary_incomplete_betas(model, so, params)?;
    let stationarity = truthful_stationarity(model, so, betas, params)?;
    if stationarity > INCOMPLETE_STATIONARITY_TOL {
        return Err(Error::Construction(format!(
            "per-type penalties do not make the optimum stationary (residual {stationarity:e})"
        )));
    }
    Ok(BetaDesign { betas, closed_form, used_closed_form: false, closed_form_stationarity, stationarity })
}

pub fn design_incomplete_betas(model: &BinaryTypeModel, so: TypeStrategy, params: &GameParams) -> Result<(f64, f64)> {
    Ok(design_incomplete_betas_report(model, so, params)?.betas)
}

/// Scaled planner condition for a client of type `own` at strategy `(t, 1)`.
fn social_condition(own: BinaryType, t: f64, model: &BinaryTypeModel, params: &GameParams) -> ScaledCondition {
    let strategy = TypeStrategy { low: t, high: 1.0 };
    let n_clients = model.n_clients;
    let s = strategy.get(own);
    let (al, ah) = (model.alpha_low, model.alpha_high);
    let (mut q, mut c) = (0.0, 0.0);
    for (n, pn) in model.others_pmf().iter().enumerate() {
        let (x, a) = match own {
            BinaryType::Low => (
                x_low(n, n_clients, strategy),
                (n + 1) as f64 * (1.0 - al) + (n_clients - 1 - n) as f64 * (1.0 - ah),
            ),
            BinaryType::High => (
                x_high(n, n_clients, strategy),
                n as f64 * (1.0 - al) + (n_clients - n) as f64 * (1.0 - ah),
            ),
        };
        q += pn * a * x.powf(-1.5);
        c += pn * a * x.powi(-2);
    }
    let k = params.kappa() / s;
    ScaledCondition {
        quad: k * q,
        cubic: k * c / params.l_smooth(),
        constant: model.alpha(own) * params.cs(),
    }
}

/// All symmetric stationary points of the expected social cost under
/// truthful aggregation.
pub fn so_binary_candidates(model: &BinaryTypeModel, params: &GameParams, scan: RatioScan) -> Result<Vec<TypeStrategy>> {
    params.require_positive_kappa()?;
    scan_two_type(|own, t| Ok(social_condition(own, t, model, params)), scan)
}

/// Largest scaled derivative of the expected social cost in each type's
/// common noise level, by central differences.
pub fn so_binary_stationarity(model: &BinaryTypeModel, so: TypeStrategy, params: &GameParams) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in BinaryType::BOTH {
        let s = so.get(t);
        let h = 1e-6 * s;
        let shifted = |d: f64| {
            let mut x = so;
            match t {
                BinaryType::Low => x.low += d,
                BinaryType::High => x.high += d,
            }
            expected_social_cost(ReportingCase::Truthful, x, model, params)
        };
        let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let scale = model.n_clients as f64 * model.prob(t) * model.alpha(t) * params.cs();
        worst = worst.max(fd.abs() * s * s / scale);
    }
    Ok(worst)
}

/// Type-contingent optimum: the symmetric stationary point of the expected
/// social cost on the branch of the complete-information optimum. Among
/// candidates ordered like that optimum (the more privacy-sensitive type
/// adds less noise), the one whose ratio is nearest `alpha_H / alpha_L`.
///
/// Stationary points where one type adds almost unbounded noise can have a
/// lower expected cost; they are not returned.
pub fn solve_so_binary(model: &BinaryTypeModel, params: &GameParams) -> Result<TypeStrategy> {
    let candidates: Vec<TypeStrategy> = so_binary_candidates(model, params, RatioScan::default())?
        .into_iter()
        .filter(|c| (c.ratio() - 1.0) * (model.alpha_high - model.alpha_low) >= 0.0)
        .collect();
    let reference = model.alpha_high / model.alpha_low;
    let so = nearest_ratio(&candidates, reference).ok_or_else(|| Error::Solver {
        message: format!("expected social cost has no interior symmetric stationary point at eta = {}", model.eta),
        best: vec![],
        residual: f64::NAN,
    })?;
    params.check_in_bounds(&[so.low, so.high], "binary optimum")?;
    let residual = so_binary_stationarity(model, so, params)?;
    if residual > 1e-6 {
        return Err(Error::Solver {
            message: "binary optimum fails the stationarity check".into(),
            best: vec![so.low, so.high],
            residual,
        });
    }
    Ok(so)
}

/// Weighted sums `Q1 = sum p_{N-1}(n) p_N(N-1-n)`, `Q2 = sum p_{N-1}(n) p_N(n+1)`.
pub fn reward_q_weights(model: &BinaryTypeModel) -> (f64, f64) {
    let others = model.others_pmf();
    let pop = model.population_pmf();
    let n_others = model.n_clients - 1;
    let q1 = others.iter().enumerate().map(|(n, p)| p * pop[n_others - n]).sum();
    let q2 = others.iter().enumerate().map(|(n, p)| p * pop[n + 1]).sum();
    (q1, q2)
}

/// How the rewards were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMethod {
    /// Closed-form quotient with numerically computed case costs.
    Quotient,
    /// Direct solution of the truthfulness constraints.
    Direct,
}

/// Result of [`design_incomplete_rewards_report`].
#[derive(Debug, Clone)]
pub struct RewardDesign {
    pub rewards: (f64, f64),
    pub method: RewardMethod,
    /// The quotient-formula rewards, whether or not they were used.
    pub quotient: Option<(f64, f64)>,
    /// Equilibria of the four cases under the designed penalties.
    pub cases: Vec<BneResult>,
}

/// One truthfulness constraint `a . r >= b`.
#[derive(Debug, Clone, Copy)]
struct Constraint {
    a: [f64; 2],
    b: f64,
}

fn reward_index(t: BinaryType) -> usize {
    match t {
        BinaryType::Low => 0,
        BinaryType::High => 1,
    }
}

/// Pre-transfer cost and reward weight of type `t` in the case equilibrium.
fn case_terms(t: BinaryType, r: &BneResult, model: &BinaryTypeModel, scheme: &PricingScheme, params: &GameParams) -> Result<(f64, f64)> {
    let st = r.strategy();
    let parts = expected_cost_parts(t, r.case.report(t), st.get(t), st, r.case, model, scheme, params)?;
    Ok((parts.before_transfers(), parts.reward_weight))
}

/// Nonnegative rewards under which truthful reporting is the cheapest case
/// for both types. The quotient formula is tried first; if it fails the
/// check, the constraints are solved directly, preferring the pair with the
/// smallest expected outlay.
pub fn design_incomplete_rewards_report(
    model: &BinaryTypeModel,
    scheme: &PricingScheme,
    params: &GameParams,
) -> Result<RewardDesign> {
    let priced = PricingScheme { reward_low: 0.0, reward_high: 0.0, compensation: 0.0, ..scheme.clone() };
    let mut cases = Vec::new();
    for case in ReportingCase::ALL {
        match solve_bne_case(case, model, &priced, params) {
            Ok(r) => cases.push(r),
            Err(e) if case == ReportingCase::Truthful => return Err(e),
            Err(_) => {}
        }
    }
    let truthful = cases[0].clone();
    let mut constraints = Vec::new();
    for t in BinaryType::BOTH {
        let (k_true, w_true) = case_terms(t, &truthful, model, &priced, params)?;
        for other in cases.iter().skip(1) {
            let (k_dev, w_dev) = case_terms(t, other, model, &priced, params)?;
            let mut a = [0.0; 2];
            a[reward_index(t)] += w_true;
            a[reward_index(other.case.report(t))] -= w_dev;
            let margin = 1e-6 * k_true.abs().max(1.0);
            constraints.push(Constraint { a, b: k_true - k_dev + margin });
        }
    }
    let feasible = |r: [f64; 2]| {
        r[0] >= 0.0
            && r[1] >= 0.0
            && constraints.iter().all(|c| c.a[0] * r[0] + c.a[1] * r[1] >= c.b - 1e-12 * c.b.abs().max(1.0))
    };
    let quotient = {
        let get = |c: ReportingCase, t: BinaryType| -> Option<f64> {
            cases.iter().find(|r| r.case == c).and_then(|r| case_terms(t, r, model, &priced, params).ok()).map(|x| x.0)
        };
        let (q1, q2) = reward_q_weights(model);
        match (get(ReportingCase::Misreport, BinaryType::Low), get(ReportingCase::Misreport, BinaryType::High)) {
            (Some(a2), Some(a4)) if (q2 * q2 - q1 * q1).abs() > 1e-300 => {
                let a1 = get(ReportingCase::Truthful, BinaryType::Low).expect("truthful solved");
                let a3 = get(ReportingCase::Truthful, BinaryType::High).expect("truthful solved");
                let d = q2 * q2 - q1 * q1;
                Some((
                    ((q2 * (a3 - a1) - q1 * (a2 - a4)) / d).max(0.0),
                    ((q1 * (a3 - a1) - q2 * (a2 - a4)) / d).max(0.0),
                ))
            }
            _ => None,
        }
    };
    if let Some(q) = quotient {
        if feasible([q.0, q.1]) {
            return Ok(RewardDesign { rewards: q, method: RewardMethod::Quotient, quotient, cases });
        }
    }
    // vertices of the feasible region, including the axes
    let mut lines: Vec<Constraint> = constraints.clone();
    lines.push(Constraint { a: [1.0, 0.0], b: 0.0 });
    lines.push(Constraint { a: [0.0, 1.0], b: 0.0 });
    let outlay = |r: [f64; 2]| {
        let wl = case_terms(BinaryType::Low, &truthful, model, &priced, params).map(|x| x.1).unwrap_or(0.0);
        let wh = case_terms(BinaryType::High, &truthful, model, &priced, params).map(|x| x.1).unwrap_or(0.0);
        model.eta * wl * r[0] + (1.0 - model.eta) * wh * r[1]
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (c, d) = (lines[i], lines[j]);
            let det = c.a[0] * d.a[1] - c.a[1] * d.a[0];
            if det.abs() < 1e-300 {
                continue;
            }
            let r = [(c.b * d.a[1] - c.a[1] * d.b) / det, (c.a[0] * d.b - c.b * d.a[0]) / det];
            if feasible(r) {
                let cost = outlay(r);
                if best.is_none_or(|(_, v)| cost < v) {
                    best = Some((r, cost));
                }
            }
        }
    }
    match best {
        Some((r, _)) => Ok(RewardDesign { rewards: (r[0], r[1]), method: RewardMethod::Direct, quotient, cases }),
        None => Err(Error::Construction(format!(
            "no nonnegative rewards make truthful reporting the cheapest case at eta = {}",
            model.eta
        ))),
    }
}

pub fn design_incomplete_rewards(model: &BinaryTypeModel, scheme: &PricingScheme, params: &GameParams) -> Result<(f64, f64)> {
    Ok(design_incomplete_rewards_report(model, scheme, params)?.rewards)
}

/// How to evaluate the compensation expectation.
#[derive(Debug, Clone, Copy)]
pub enum CompensationMethod {
    /// Exact binomial sum for small populations, Monte Carlo otherwise.
    Auto { draws: usize, seed: u64 },
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
}

pub const EXACT_SUM_MAX_CLIENTS: usize = 30;
pub const MIN_MC_DRAWS: usize = 100_000;

/// Expected net collections per client,
/// `E[sum_i p_i - sum_i r_i] / N`, under truthful reporting with the
/// equilibrium noise levels of `bne`. For the Monte-Carlo route the
/// standard error is returned alongside.
pub fn compensation_incomplete_estimate(
    model: &BinaryTypeModel,
    scheme: &PricingScheme,
    bne: &BneResult,
    method: CompensationMethod,
    exec: Execution,
) -> Result<Estimate> {
    let n = model.n_clients;
    let nf = n as f64;
    let beta = [scheme.beta_for_type(BinaryType::Low)?, scheme.beta_for_type(BinaryType::High)?];
    let reward = [scheme.reward_low, scheme.reward_high];
    let sd = [bne.sigma_low, bne.sigma_high];
    let pop = model.population_pmf();
    let exact = || {
        let c2 = own_deviation_weight(n);
        let mut total = 0.0;
        for (m, pm) in pop.iter().enumerate() {
            let mf = m as f64;
            let all_var = mf * sd[0] * sd[0] + (nf - mf) * sd[1] * sd[1];
            let mut net = 0.0;
            for (k, count) in [(0, mf), (1, nf - mf)] {
                if count == 0.0 {
                    continue;
                }
                let dev = c2 * sd[k] * sd[k] + (all_var - sd[k] * sd[k]) / (nf * nf);
                net += count * (beta[k] * dev - reward[k] * pop[m]);
            }
            total += pm * net;
        }
        Estimate { mean: total / nf, std_err: 0.0, draws: 0 }
    };
    let mc = |draws: usize, seed: u64| {
        let draws = draws.max(MIN_MC_DRAWS);
        let eta = model.eta;
        estimate(draws, seed, exec, |rng| {
            let mut types = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            for _ in 0..n {
                let k = usize::from(!rng.random_bool(eta));
                let z: f64 = StandardNormal.sample(rng);
                types.push(k);
                w.push(sd[k] * z);
            }
            let mean = w.iter().sum::<f64>() / nf;
            let low = types.iter().filter(|k| **k == 0).count();
            let net: f64 = w
                .iter()
                .zip(&types)
                .map(|(wi, k)| beta[*k] * (wi - mean).powi(2) - reward[*k] * pop[low])
                .sum();
            net / nf
        })
    };
    Ok(match method {
        CompensationMethod::Exact => exact(),
        CompensationMethod::MonteCarlo { draws, seed } => mc(draws, seed),
        CompensationMethod::Auto { draws, seed } => {
            if n <= EXACT_SUM_MAX_CLIENTS {
                exact()
            } else {
                mc(draws, seed)
            }
        }
    })
}

pub fn compensation_incomplete(
    model: &BinaryTypeModel,
    scheme: &PricingScheme,
    bne: &BneResult,
    method: CompensationMethod,
) -> Result<f64> {
    Ok(compensation_incomplete_estimate(model, scheme, bne, method, Execution::Parallel)?.mean)
}

/// Monte-Carlo estimate of `sum_i P_i` with types, truthful reports and
/// noise all drawn at random; compensation included.
pub fn budget_check_incomplete(
    model: &BinaryTypeModel,
    scheme: &PricingScheme,
    bne: &BneResult,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    let e = compensation_incomplete_estimate(model, scheme, bne, CompensationMethod::MonteCarlo { draws, seed }, exec)?;
    let nf = model.n_clients as f64;
    Ok(Estimate {
        mean: nf * (e.mean - scheme.compensation),
        std_err: nf * e.std_err,
        draws: e.draws,
    })
}

/// Everything produced by [`design_incomplete`].
#[derive(Debug, Clone)]
pub struct IncompleteDesign {
    pub scheme: PricingScheme,
    pub so: TypeStrategy,
    pub betas: BetaDesign,
    pub rewards: RewardDesign,
    /// Truthful equilibrium under the full scheme.
    pub truthful: BneResult,
}

/// Full pipeline: optimum, penalties, rewards, then compensation.
pub fn design_incomplete(
    model: &BinaryTypeModel,
    params: &GameParams,
    method: CompensationMethod,
) -> Result<IncompleteDesign> {
    let so = solve_so_binary(model, params)?;
    let betas = design_incomplete_betas_report(model, so, params)?;
    let base = PricingScheme::per_type(betas.betas.0, betas.betas.1)?.with_calibration(vec![so.low, so.high]);
    let rewards = design_incomplete_rewards_report(model, &base, params)?;
    let with_rewards = base.with_rewards(rewards.rewards.0, rewards.rewards.1)?;
    let q = compensation_incomplete(model, &with_rewards, &rewards.cases[0], method)?;
    let mut scheme = with_rewards.with_compensation(q)?;
    scheme.seed = match method {
        CompensationMethod::MonteCarlo { seed, .. } => Some(seed),
        CompensationMethod::Auto { seed, .. } if model.n_clients > EXACT_SUM_MAX_CLIENTS => Some(seed),
        _ => None,
    };
    // rewards and compensation do not move the noise levels
    let truthful = solve_bne_case(ReportingCase::Truthful, model, &scheme, params)?;
    Ok(IncompleteDesign { scheme, so, betas, rewards, truthful })
}
