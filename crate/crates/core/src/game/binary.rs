//! Binary-type Bayesian game: each client is low type (`alpha_L`) with
//! probability `eta`, reports a type, and picks a noise level. The server
//! weights each parameter by the inverse variance it presumes for the
//! reported type.
//!
//! Every stationarity system here is homogeneous: scaling all noise levels by
//! `G` turns `sigma^2 * dcost/dsigma` into `q G^2 + c G^3 - alpha cS` with
//! `q, c >= 0`. For a fixed ratio `t = sigma_L / sigma_H` each type's
//! condition therefore has exactly one scale root, and the symmetric
//! solutions are the ratios where the two scales agree. Scanning `t` finds
//! all of them.

use serde::{Deserialize, Serialize};

use super::{own_deviation_weight, GameParams};
use crate::binomial;
use crate::error::{Error, Result};
use crate::mechanism::PricingScheme;
use crate::rootfind::{brent, global_min_log, increasing_root, log_brackets, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryType {
    Low,
    High,
}

impl BinaryType {
    pub const BOTH: [BinaryType; 2] = [BinaryType::Low, BinaryType::High];

    pub fn other(self) -> Self {
        match self {
            BinaryType::Low => BinaryType::High,
            BinaryType::High => BinaryType::Low,
        }
    }
}

/// Types are i.i.d.: `alpha_low` with probability `eta`, else `alpha_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryTypeModel {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub eta: f64,
    pub n_clients: usize,
}

impl BinaryTypeModel {
    /// `alpha_low == alpha_high` is accepted as the degenerate one-type model.
    pub fn new(alpha_low: f64, alpha_high: f64, eta: f64, n_clients: usize) -> Result<Self> {
        if !(0.0 < alpha_low && alpha_low <= alpha_high && alpha_high < 1.0) {
            return Err(Error::domain(format!(
                "need 0 < alpha_low <= alpha_high < 1, got ({alpha_low}, {alpha_high})"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
        }
        if n_clients < 2 {
            return Err(Error::domain("need at least two clients"));
        }
        Ok(BinaryTypeModel { alpha_low, alpha_high, eta, n_clients })
    }

    pub fn alpha(&self, t: BinaryType) -> f64 {
        match t {
            BinaryType::Low => self.alpha_low,
            BinaryType::High => self.alpha_high,
        }
    }

    pub fn prob(&self, t: BinaryType) -> f64 {
        match t {
            BinaryType::Low => self.eta,
            BinaryType::High => 1.0 - self.eta,
        }
    }

    /// Maps a reported sensitivity onto the binary support.
    pub fn label_of(&self, alpha: f64) -> Result<BinaryType> {
        if alpha == self.alpha_low {
            Ok(BinaryType::Low)
        } else if alpha == self.alpha_high {
            Ok(BinaryType::High)
        } else {
            Err(Error::domain(format!(
                "report {alpha} is neither {} nor {}",
                self.alpha_low, self.alpha_high
            )))
        }
    }

    /// Binomial(N - 1, eta) weights on the number of other low-type clients.
    pub fn others_pmf(&self) -> Vec<f64> {
        binomial::pmf(self.n_clients - 1, self.eta)
    }

    /// Binomial(N, eta) weights on the total number of low-type clients.
    pub fn population_pmf(&self) -> Vec<f64> {
        binomial::pmf(self.n_clients, self.eta)
    }
}

/// How each type reports in a symmetric profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReportingCase {
    /// Everyone reports low.
    PoolLow,
    /// Everyone reports high.
    PoolHigh,
    /// Every client reports the other type.
    Misreport,
    /// Every client reports its own type.
    Truthful,
}

impl ReportingCase {
    pub const ALL: [ReportingCase; 4] = [
        ReportingCase::Truthful,
        ReportingCase::Misreport,
        ReportingCase::PoolLow,
        ReportingCase::PoolHigh,
    ];

    pub fn report(self, t: BinaryType) -> BinaryType {
        match self {
            ReportingCase::PoolLow => BinaryType::Low,
            ReportingCase::PoolHigh => BinaryType::High,
            ReportingCase::Misreport => t.other(),
            ReportingCase::Truthful => t,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReportingCase::PoolLow => "pool_low",
            ReportingCase::PoolHigh => "pool_high",
            ReportingCase::Misreport => "misreport",
            ReportingCase::Truthful => "truthful",
        }
    }

    /// Number of other clients reporting low when `n` of the `n_others`
    /// others are low type.
    fn others_reporting_low(self, n: usize, n_others: usize) -> usize {
        match self {
            ReportingCase::PoolLow => n_others,
            ReportingCase::PoolHigh => 0,
            ReportingCase::Misreport => n_others - n,
            ReportingCase::Truthful => n,
        }
    }
}

impl std::fmt::Display for ReportingCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Type-contingent noise levels `(sigma(alpha_L), sigma(alpha_H))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeStrategy {
    pub low: f64,
    pub high: f64,
}

impl TypeStrategy {
    pub fn get(&self, t: BinaryType) -> f64 {
        match t {
            BinaryType::Low => self.low,
            BinaryType::High => self.high,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.low / self.high
    }

    fn check(&self) -> Result<()> {
        if self.low > 0.0 && self.high > 0.0 && self.low.is_finite() && self.high.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("strategy {self:?} must be positive and finite")))
        }
    }
}

/// A symmetric Bayesian equilibrium of one reporting case.
#[derive(Debug, Clone, PartialEq)]
pub struct BneResult {
    pub case: ReportingCase,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub expected_cost_low: f64,
    pub expected_cost_high: f64,
    /// Max relative first-order residual over the two types.
    pub residual: f64,
    /// Number of symmetric solutions the scan found for this case.
    pub candidates: usize,
}

impl BneResult {
    pub fn strategy(&self) -> TypeStrategy {
        TypeStrategy { low: self.sigma_low, high: self.sigma_high }
    }

    pub fn cost(&self, t: BinaryType) -> f64 {
        match t {
            BinaryType::Low => self.expected_cost_low,
            BinaryType::High => self.expected_cost_high,
        }
    }
}

/// Expected cost split into its parts. `reward_weight` is the expected
/// `p_N(N_L)` factor that multiplies the reward coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParts {
    pub accuracy: f64,
    pub privacy: f64,
    pub penalty: f64,
    pub reward_weight: f64,
    pub reward: f64,
    pub compensation: f64,
    /// Derivative of the total in the client's own sigma.
    pub gradient: f64,
}

impl CostParts {
    pub fn total(&self) -> f64 {
        self.accuracy + self.privacy + self.penalty - self.reward - self.compensation
    }

    /// Everything except rewards and compensation.
    pub fn before_transfers(&self) -> f64 {
        self.accuracy + self.privacy + self.penalty
    }
}

/// Client of type `own` reports `report` and adds noise `own_sigma`; all
/// other clients follow `case` with `strategy`. Expectation over the number
/// of other low-type clients.
#[allow(clippy::too_many_arguments)]
pub fn expected_cost_parts(
    own: BinaryType,
    report: BinaryType,
    own_sigma: f64,
    strategy: TypeStrategy,
    case: ReportingCase,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<CostParts> {
    strategy.check()?;
    if !(own_sigma > 0.0 && own_sigma.is_finite()) {
        return Err(Error::domain(format!("own sigma must be positive, got {own_sigma}")));
    }
    let n_clients = model.n_clients;
    let n_others = n_clients - 1;
    let alpha = model.alpha(own);
    let presumed = |r: BinaryType| strategy.get(r);
    let p_own = presumed(report);
    let p_low = presumed(case.report(BinaryType::Low));
    let p_high = presumed(case.report(BinaryType::High));
    let (inv_own, inv_low, inv_high) = (p_own.powi(-2), p_low.powi(-2), p_high.powi(-2));
    let (w_own, w_low, w_high) = (
        own_sigma * own_sigma / p_own.powi(4),
        strategy.low * strategy.low / p_low.powi(4),
        strategy.high * strategy.high / p_high.powi(4),
    );
    let others = model.others_pmf();
    let population = model.population_pmf();
    let (mut acc, mut dacc, mut reward_weight) = (0.0, 0.0, 0.0);
    for (n, pn) in others.iter().enumerate() {
        if *pn == 0.0 {
            continue;
        }
        let m = (n_others - n) as f64;
        let total_precision = inv_own + n as f64 * inv_low + m * inv_high;
        let num = w_own + n as f64 * w_low + m * w_high;
        let root = num.sqrt();
        let delta = root / total_precision;
        acc += pn * params.accuracy(delta);
        dacc += pn * params.accuracy_slope(delta) * own_sigma / (p_own.powi(4) * total_precision * root);
        let reported_low = case.others_reporting_low(n, n_others) + usize::from(report == BinaryType::Low);
        reward_weight += pn * population[reported_low];
    }
    let beta = pricing.beta_for_type(report)?;
    let c2 = own_deviation_weight(n_clients);
    let nn = n_clients as f64;
    let others_var = n_others as f64
        * (model.eta * strategy.low * strategy.low + (1.0 - model.eta) * strategy.high * strategy.high);
    let cs = params.cs();
    Ok(CostParts {
        accuracy: (1.0 - alpha) * acc,
        privacy: alpha * cs / own_sigma,
        penalty: beta * (c2 * own_sigma * own_sigma + others_var / (nn * nn)),
        reward_weight,
        reward: pricing.reward_for_type(report) * reward_weight,
        compensation: pricing.compensation,
        gradient: (1.0 - alpha) * dacc - alpha * cs / (own_sigma * own_sigma) + 2.0 * beta * c2 * own_sigma,
    })
}

/// Total expected cost; see [`expected_cost_parts`].
#[allow(clippy::too_many_arguments)]
pub fn expected_cost_binary(
    own: BinaryType,
    report: BinaryType,
    own_sigma: f64,
    strategy: TypeStrategy,
    case: ReportingCase,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<f64> {
    Ok(expected_cost_parts(own, report, own_sigma, strategy, case, model, pricing, params)?.total())
}

/// Expected social cost (no transfers) when every client follows `case`
/// with `strategy`.
pub fn expected_social_cost(
    case: ReportingCase,
    strategy: TypeStrategy,
    model: &BinaryTypeModel,
    params: &GameParams,
) -> Result<f64> {
    let zero = PricingScheme::zero_binary();
    let mut total = 0.0;
    for t in BinaryType::BOTH {
        let parts = expected_cost_parts(t, case.report(t), strategy.get(t), strategy, case, model, &zero, params)?;
        total += model.prob(t) * (parts.accuracy + parts.privacy);
    }
    Ok(model.n_clients as f64 * total)
}

/// `sigma^2 * dcost/dsigma = quad G^2 + cubic G^3 - constant` at scale `G`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledCondition {
    pub quad: f64,
    pub cubic: f64,
    pub constant: f64,
}

impl ScaledCondition {
    pub fn scale_root(&self) -> Result<f64> {
        let (q, c, k) = (self.quad, self.cubic, self.constant);
        if !(k > 0.0) || !(q >= 0.0 && c >= 0.0) || (q == 0.0 && c == 0.0) {
            return Err(Error::Solver {
                message: format!("degenerate scaled condition {self:?}"),
                best: vec![],
                residual: f64::NAN,
            });
        }
        let guess = [(k / q).sqrt(), (k / c).cbrt()]
            .into_iter()
            .filter(|g| g.is_finite())
            .fold(f64::INFINITY, f64::min);
        increasing_root(|g| g * g * (q + c * g) - k, guess, Tolerance::default())
    }
}

/// Scaled stationarity condition of type `own` in `case` at the strategy
/// `(t, 1)`.
pub(crate) fn case_condition(
    own: BinaryType,
    t: f64,
    case: ReportingCase,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<ScaledCondition> {
    let strategy = TypeStrategy { low: t, high: 1.0 };
    let s = strategy.get(own);
    let report = case.report(own);
    let n_others = model.n_clients - 1;
    let p_own = strategy.get(report);
    let p_low = strategy.get(case.report(BinaryType::Low));
    let p_high = strategy.get(case.report(BinaryType::High));
    let (inv_own, inv_low, inv_high) = (p_own.powi(-2), p_low.powi(-2), p_high.powi(-2));
    let (w_own, w_low, w_high) = (s * s / p_own.powi(4), t * t / p_low.powi(4), 1.0 / p_high.powi(4));
    let (mut sd, mut sdd) = (0.0, 0.0);
    for (n, pn) in model.others_pmf().iter().enumerate() {
        let m = (n_others - n) as f64;
        let prec = inv_own + n as f64 * inv_low + m * inv_high;
        let root = (w_own + n as f64 * w_low + m * w_high).sqrt();
        let d = s / (p_own.powi(4) * prec * root);
        sd += pn * d;
        sdd += pn * d * root / prec;
    }
    let alpha = model.alpha(own);
    let k = (1.0 - alpha) * params.kappa() * s * s;
    let beta = pricing.beta_for_type(report)?;
    Ok(ScaledCondition {
        quad: k * sd,
        cubic: k * sdd / params.l_smooth() + 2.0 * beta * own_deviation_weight(model.n_clients) * s.powi(3),
        constant: alpha * params.cs(),
    })
}

/// Range and density of the ratio scan.
#[derive(Debug, Clone, Copy)]
pub struct RatioScan {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for RatioScan {
    fn default() -> Self {
        RatioScan { lo: 1e-6, hi: 1e6, points: 481 }
    }
}

/// All symmetric solutions of a two-type homogeneous system, ordered by
/// ratio.
pub(crate) fn scan_two_type<F>(condition: F, scan: RatioScan) -> Result<Vec<TypeStrategy>>
where
    F: Fn(BinaryType, f64) -> Result<ScaledCondition>,
{
    let log_gap = |t: f64| -> f64 {
        let gl = condition(BinaryType::Low, t).and_then(|c| c.scale_root());
        let gh = condition(BinaryType::High, t).and_then(|c| c.scale_root());
        match (gl, gh) {
            (Ok(a), Ok(b)) => a.ln() - b.ln(),
            _ => f64::NAN,
        }
    };
    let mut out = Vec::new();
    for (a, b) in log_brackets(log_gap, scan.lo, scan.hi, scan.points) {
        let lt = brent(|u| log_gap(u.exp()), a.ln(), b.ln(), Tolerance::default())?;
        let t = lt.exp();
        let g = condition(BinaryType::High, t)?.scale_root()?;
        out.push(TypeStrategy { low: g * t, high: g });
    }
    Ok(out)
}

/// Picks the solution whose ratio is closest, in log terms, to `reference`.
pub(crate) fn nearest_ratio(candidates: &[TypeStrategy], reference: f64) -> Option<TypeStrategy> {
    candidates.iter().copied().min_by(|a, b| {
        let da = (a.ratio().ln() - reference.ln()).abs();
        let db = (b.ratio().ln() - reference.ln()).abs();
        da.total_cmp(&db)
    })
}

/// Ratio used to choose among several symmetric solutions: the calibration
/// of the pricing scheme if it has one, otherwise the complete-information
/// equilibrium ratio `((1 - a_L)/a_L) / ((1 - a_H)/a_H)`.
pub fn reference_ratio(model: &BinaryTypeModel, pricing: &PricingScheme) -> f64 {
    match pricing.calibrated_strategy() {
        Some(s) => s.ratio(),
        None => {
            let r = |a: f64| (1.0 - a) / a;
            r(model.alpha_low) / r(model.alpha_high)
        }
    }
}

/// Every symmetric solution of the case's stationarity system.
pub fn bne_candidates(
    case: ReportingCase,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
    scan: RatioScan,
) -> Result<Vec<TypeStrategy>> {
    params.require_positive_kappa()?;
    scan_two_type(|own, t| case_condition(own, t, case, model, pricing, params), scan)
}

/// Max over types of `|sigma^2 dcost/dsigma| / (alpha cS)` at `strategy`.
pub fn case_residual(
    case: ReportingCase,
    strategy: TypeStrategy,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in BinaryType::BOTH {
        let s = strategy.get(t);
        let parts = expected_cost_parts(t, case.report(t), s, strategy, case, model, pricing, params)?;
        worst = worst.max((parts.gradient * s * s).abs() / (model.alpha(t) * params.cs()));
    }
    Ok(worst)
}

/// Symmetric equilibrium of one reporting case. When the system has several
/// symmetric solutions, the one nearest to [`reference_ratio`] is returned.
pub fn solve_bne_case(
    case: ReportingCase,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<BneResult> {
    let candidates = bne_candidates(case, model, pricing, params, RatioScan::default())?;
    let chosen = nearest_ratio(&candidates, reference_ratio(model, pricing)).ok_or_else(|| Error::Solver {
        message: format!("no symmetric equilibrium for case {case} at eta = {}", model.eta),
        best: vec![],
        residual: f64::NAN,
    })?;
    params.check_in_bounds(&[chosen.low, chosen.high], "bayesian equilibrium")?;
    let residual = case_residual(case, chosen, model, pricing, params)?;
    if residual > 1e-8 {
        return Err(Error::Solver {
            message: format!("case {case} residual above tolerance"),
            best: vec![chosen.low, chosen.high],
            residual,
        });
    }
    let cost = |t: BinaryType| {
        expected_cost_binary(t, case.report(t), chosen.get(t), chosen, case, model, pricing, params)
    };
    Ok(BneResult {
        case,
        sigma_low: chosen.low,
        sigma_high: chosen.high,
        expected_cost_low: cost(BinaryType::Low)?,
        expected_cost_high: cost(BinaryType::High)?,
        residual,
        candidates: candidates.len(),
    })
}

/// One case inside [`ReportingOutcome`].
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case: ReportingCase,
    pub result: std::result::Result<BneResult, String>,
}

/// Result of [`best_reporting`].
#[derive(Debug, Clone)]
pub struct ReportingOutcome {
    pub chosen: ReportingCase,
    /// The chosen case is a best case for both types.
    pub stable: bool,
    pub cases: Vec<CaseOutcome>,
    /// For each type, the smallest cost increase from moving out of the
    /// truthful case into any other solved case. `None` when the truthful
    /// case has no equilibrium.
    pub ic_margins: Option<(f64, f64)>,
    /// For each type, the gain from a unilateral misreport (with a
    /// re-optimized sigma) while everyone else stays truthful.
    pub unilateral_gains: Option<(f64, f64)>,
}

impl ReportingOutcome {
    pub fn result(&self, case: ReportingCase) -> Option<&BneResult> {
        self.cases.iter().find(|c| c.case == case).and_then(|c| c.result.as_ref().ok())
    }
}

fn tie_tolerance(a: f64, b: f64) -> f64 {
    1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Gain of type `own` from misreporting alone while all others follow the
/// truthful equilibrium `bne`, with the deviator's sigma re-optimized.
pub fn unilateral_gain(
    own: BinaryType,
    bne: &BneResult,
    model: &BinaryTypeModel,
    pricing: &PricingScheme,
    params: &GameParams,
) -> Result<f64> {
    let strategy = bne.strategy();
    let case = bne.case;
    let report = case.report(own).other();
    let (lo, hi) = params.sigma_bounds;
    let cost = |s: f64| {
        expected_cost_binary(own, report, s, strategy, case, model, pricing, params).unwrap_or(f64::INFINITY)
    };
    let grad = |s: f64| {
        expected_cost_parts(own, report, s, strategy, case, model, pricing, params)
            .map(|p| p.gradient * s * s)
            .unwrap_or(f64::NAN)
    };
    let best = global_min_log(cost, grad, lo, hi, 400, Tolerance::default());
    Ok(bne.cost(own) - best.value)
}

/// Solves every reporting case, compares each type's expected cost across
/// the cases and returns the case both types prefer, truthful first.
pub fn best_reporting(model: &BinaryTypeModel, pricing: &PricingScheme, params: &GameParams) -> Result<ReportingOutcome> {
    let cases: Vec<CaseOutcome> = ReportingCase::ALL
        .iter()
        .map(|&case| CaseOutcome {
            case,
            result: solve_bne_case(case, model, pricing, params).map_err(|e| e.to_string()),
        })
        .collect();
    let solved: Vec<&BneResult> = cases.iter().filter_map(|c| c.result.as_ref().ok()).collect();
    if solved.is_empty() {
        return Err(Error::Solver {
            message: format!("no reporting case has an equilibrium at eta = {}", model.eta),
            best: vec![],
            residual: f64::NAN,
        });
    }
    let is_best_for = |r: &BneResult, t: BinaryType| {
        solved.iter().all(|o| r.cost(t) <= o.cost(t) + tie_tolerance(r.cost(t), o.cost(t)))
    };
    let stable_case = solved
        .iter()
        .find(|r| BinaryType::BOTH.iter().all(|&t| is_best_for(r, t)))
        .map(|r| r.case);
    let (chosen, stable) = match stable_case {
        Some(c) => (c, true),
        None => {
            let ex_ante = |r: &BneResult| model.eta * r.expected_cost_low + (1.0 - model.eta) * r.expected_cost_high;
            let best = solved
                .iter()
                .min_by(|a, b| ex_ante(a).total_cmp(&ex_ante(b)))
                .expect("non-empty");
            (best.case, false)
        }
    };
    let truthful = solved.iter().find(|r| r.case == ReportingCase::Truthful).copied();
    let ic_margins = truthful.map(|tr| {
        let margin = |t: BinaryType| {
            solved
                .iter()
                .filter(|o| o.case != ReportingCase::Truthful)
                .map(|o| o.cost(t) - tr.cost(t))
                .fold(f64::INFINITY, f64::min)
        };
        (margin(BinaryType::Low), margin(BinaryType::High))
    });
    let unilateral_gains = match truthful {
        Some(tr) => Some((
            unilateral_gain(BinaryType::Low, tr, model, pricing, params)?,
            unilateral_gain(BinaryType::High, tr, model, pricing, params)?,
        )),
        None => None,
    };
    Ok(ReportingOutcome { chosen, stable, cases, ic_margins, unilateral_gains })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::unit_params;
    use super::super::{solve_ne_complete, TypeProfile};
    use super::*;

    fn model(eta: f64, n: usize) -> BinaryTypeModel {
        BinaryTypeModel::new(0.25, 0.75, eta, n).unwrap()
    }

    fn zero() -> PricingScheme {
        PricingScheme::zero_binary()
    }

    #[test]
    fn two_client_hand_expansion() {
        // N = 2: the other client is low with probability eta, else high
        let p = unit_params();
        let m = model(0.3, 2);
        let st = TypeStrategy { low: 1.7, high: 0.4 };
        let pricing = PricingScheme::per_type(0.2, 0.9).unwrap().with_rewards(1.5, 0.5).unwrap().with_compensation(0.1).unwrap();
        let (own_s, a, cs) = (1.1, 0.25, p.cs());
        // own truthful low report, others truthful
        let delta = |actual: [f64; 2], presumed: [f64; 2]| {
            let num: f64 = actual.iter().zip(&presumed).map(|(a, q)| a * a / q.powi(4)).sum();
            num.sqrt() / presumed.iter().map(|q| q.powi(-2)).sum::<f64>()
        };
        let acc_low = p.accuracy(delta([own_s, 1.7], [1.7, 1.7]));
        let acc_high = p.accuracy(delta([own_s, 0.4], [1.7, 0.4]));
        let acc = 0.3 * acc_low + 0.7 * acc_high;
        let penalty = 0.2 * (0.25 * own_s * own_s + (0.3 * 1.7 * 1.7 + 0.7 * 0.4 * 0.4) / 4.0);
        // N_L = 2 with prob 0.3, N_L = 1 with prob 0.7; p_2 = (0.09, 0.42, 0.49)
        let reward = 1.5 * (0.3 * 0.09 + 0.7 * 0.42);
        let oracle = (1.0 - a) * acc + a * cs / own_s + penalty - reward - 0.1;
        let got = expected_cost_binary(BinaryType::Low, BinaryType::Low, own_s, st, ReportingCase::Truthful, &m, &pricing, &p).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = unit_params();
        let m = model(0.4, 6);
        let st = TypeStrategy { low: 2.0, high: 0.5 };
        let pricing = PricingScheme::per_type(0.3, 0.05).unwrap();
        for case in ReportingCase::ALL {
            for own in BinaryType::BOTH {
                for report in BinaryType::BOTH {
                    let f = |s: f64| expected_cost_binary(own, report, s, st, case, &m, &pricing, &p).unwrap();
                    let s = 0.8;
                    let h = 1e-6;
                    let fd = (f(s + h) - f(s - h)) / (2.0 * h);
                    let g = expected_cost_parts(own, report, s, st, case, &m, &pricing, &p).unwrap().gradient;
                    assert!((fd - g).abs() < 1e-6 * g.abs().max(1.0), "{case} {own:?} {report:?}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn pricing_off_reduction() {
        let p = unit_params();
        let m = model(0.5, 5);
        let st = TypeStrategy { low: 1.0, high: 0.6 };
        let parts = expected_cost_parts(BinaryType::High, BinaryType::High, 0.6, st, ReportingCase::Truthful, &m, &zero(), &p).unwrap();
        assert_eq!(parts.penalty, 0.0);
        assert_eq!(parts.reward, 0.0);
        assert!((parts.total() - (parts.accuracy + 0.75 * p.cs() / 0.6)).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        for (n, eta) in [(2, 0.5), (20, 0.1), (100, 0.9)] {
            let m = model(eta, n);
            assert!((m.others_pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((m.population_pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truthful_case_is_stationary() {
        let p = unit_params();
        let m = model(0.5, 20);
        let r = solve_bne_case(ReportingCase::Truthful, &m, &zero(), &p).unwrap();
        for t in BinaryType::BOTH {
            let s = r.strategy().get(t);
            let f = |x: f64| {
                expected_cost_binary(t, t, x, r.strategy(), ReportingCase::Truthful, &m, &zero(), &p).unwrap()
            };
            let h = 1e-6 * s;
            let fd = (f(s + h) - f(s - h)) / (2.0 * h);
            assert!(fd.abs() * s * s < 1e-6 * m.alpha(t) * p.cs(), "{t:?}: {fd}");
        }
    }

    #[test]
    fn degenerate_types_collapse() {
        let p = unit_params();
        let m = BinaryTypeModel::new(0.4, 0.4, 0.3, 8).unwrap();
        let first = solve_bne_case(ReportingCase::Truthful, &m, &zero(), &p).unwrap();
        for case in ReportingCase::ALL {
            let r = solve_bne_case(case, &m, &zero(), &p).unwrap();
            assert!((r.sigma_low - r.sigma_high).abs() < 1e-9 * r.sigma_low, "{case}");
            assert!((r.sigma_low - first.sigma_low).abs() < 1e-9 * r.sigma_low, "{case}");
        }
        let ne = solve_ne_complete(&TypeProfile::new(vec![0.4; 8], 1e-4).unwrap(), &p).unwrap();
        assert!((first.sigma_low - ne.as_slice()[0]).abs() < 1e-9 * first.sigma_low);
        let out = best_reporting(&m, &zero(), &p).unwrap();
        assert_eq!(out.chosen, ReportingCase::Truthful);
        assert!(out.stable);
    }

    #[test]
    fn all_high_limit_matches_complete_information() {
        let p = unit_params();
        let m = model(1e-9, 10);
        let r = solve_bne_case(ReportingCase::Truthful, &m, &zero(), &p).unwrap();
        let ne = solve_ne_complete(&TypeProfile::new(vec![0.75; 10], 1e-4).unwrap(), &p).unwrap();
        let s = ne.as_slice()[0];
        assert!((r.sigma_high - s).abs() < 1e-6 * s, "{} vs {s}", r.sigma_high);
    }

    #[test]
    fn no_interior_high_response_when_all_others_low() {
        // the symmetric branch folds away before eta reaches 1
        let p = unit_params();
        for (lo, hi) in [(0.25, 0.75), (0.45, 0.55)] {
            let m = BinaryTypeModel::new(lo, hi, 1.0 - 1e-6, 10).unwrap();
            assert!(solve_bne_case(ReportingCase::Truthful, &m, &zero(), &p).is_err());
        }
    }

    #[test]
    fn reports_must_be_in_support() {
        let m = model(0.5, 4);
        assert_eq!(m.label_of(0.25).unwrap(), BinaryType::Low);
        assert!(m.label_of(0.5).is_err());
    }
}
