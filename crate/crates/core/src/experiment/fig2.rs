use rand::Rng;

use super::{columns, field, num, opt_num, param_values, ExperimentConfig, Table};
use crate::error::Result;
use crate::flsim::{
    estimate_l_smooth, generate_synthetic, reference_optimum, run_federation, AggregationRule, Dataset,
    FederationConfig,
};
use crate::aggregation::{LearningConfig, NoiseProfile};
use crate::game::{
    best_reporting, expected_social_cost, solve_bne_case, BinaryType, BinaryTypeModel, GameParams, ReportingCase,
    TypeStrategy,
};
use crate::mechanism::{design_incomplete, CompensationMethod, PricingScheme};
use crate::montecarlo::stream_rng;
use crate::par::{map_indexed, Execution};

/// One point of the eta sweep.
#[derive(Debug, Clone)]
pub struct Fig2Row {
    pub eta: f64,
    pub sc_no_pricing: Option<f64>,
    pub sc_with_pricing: Option<f64>,
    pub sc_opt: Option<f64>,
    pub sigma_no_pricing: Option<TypeStrategy>,
    pub sigma_with_pricing: Option<TypeStrategy>,
    pub chosen: Option<ReportingCase>,
    pub stable: bool,
    pub ic_margins: Option<(f64, f64)>,
    pub scheme: Option<PricingScheme>,
    /// Per-seed empirical loss gaps `(no pricing, with pricing)`.
    pub empirical: Vec<(u64, Option<f64>, Option<f64>)>,
    pub status: String,
}

impl Fig2Row {
    /// No-pricing minus with-pricing social cost.
    pub fn gap(&self) -> Option<f64> {
        Some(self.sc_no_pricing? - self.sc_with_pricing?)
    }

    pub fn truthful(&self) -> bool {
        self.chosen == Some(ReportingCase::Truthful) && self.ic_margins.is_some_and(|(l, h)| l >= 0.0 && h >= 0.0)
    }

    fn empirical_mean(&self, pick: fn(&(u64, Option<f64>, Option<f64>)) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.empirical.iter().filter_map(pick).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Fig2Result {
    pub rows: Vec<Fig2Row>,
}

impl Fig2Result {
    /// Eta with the largest pricing gap among rows where both curves exist.
    pub fn argmax_gap(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.gap().map(|g| (r.eta, g)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(eta, _)| eta)
    }
}

/// Loss gap of one training run where every client draws its type, adds the
/// noise of `strategy` for that type, and the server weights by the same
/// levels.
pub fn empirical_binary_gap(
    cfg: &ExperimentConfig,
    model: &BinaryTypeModel,
    strategy: TypeStrategy,
    seed: u64,
    data: &[Dataset],
    exec: Execution,
) -> Result<f64> {
    let svm = cfg.svm.config()?;
    let reference = reference_optimum(data, &svm)?;
    let pooled = Dataset::pooled(data)?;
    let w0 = reference.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let learning = LearningConfig::new(estimate_l_smooth(&pooled, &svm), w0, cfg.game.rounds)?;
    let mut rng = stream_rng(seed, 1);
    let noise: Vec<f64> = (0..model.n_clients)
        .map(|_| {
            let t = if rng.random_bool(model.eta) { BinaryType::Low } else { BinaryType::High };
            strategy.get(t)
        })
        .collect();
    let fc = FederationConfig::new(svm, learning);
    let agg = AggregationRule::MlePresumed(NoiseProfile::new(noise.clone())?);
    let trace = run_federation(data, &noise, &agg, None, &fc, seed, exec)?;
    crate::flsim::empirical_loss_gap(&trace, &reference)
}

fn fig2_row(cfg: &ExperimentConfig, params: &GameParams, eta: f64) -> Fig2Row {
    let mut row = Fig2Row {
        eta,
        sc_no_pricing: None,
        sc_with_pricing: None,
        sc_opt: None,
        sigma_no_pricing: None,
        sigma_with_pricing: None,
        chosen: None,
        stable: false,
        ic_margins: None,
        scheme: None,
        empirical: Vec::new(),
        status: String::new(),
    };
    let f2 = &cfg.fig2;
    let model = match BinaryTypeModel::new(f2.alpha_low, f2.alpha_high, eta, cfg.game.n_clients) {
        Ok(m) => m,
        Err(e) => {
            row.status = field(&e.to_string());
            return row;
        }
    };
    let mut problems = Vec::new();
    let no_pricing = solve_bne_case(ReportingCase::Truthful, &model, &PricingScheme::zero_binary(), params)
        .and_then(|r| Ok((r.strategy(), expected_social_cost(ReportingCase::Truthful, r.strategy(), &model, params)?)));
    match no_pricing {
        Ok((s, sc)) => {
            row.sigma_no_pricing = Some(s);
            row.sc_no_pricing = Some(sc);
        }
        Err(e) => problems.push(format!("no pricing: {e}")),
    }
    let method = CompensationMethod::Auto { draws: f2.compensation_draws, seed: cfg.seed };
    let priced = design_incomplete(&model, params, method).and_then(|d| {
        let sc_opt = expected_social_cost(ReportingCase::Truthful, d.so, &model, params)?;
        let out = best_reporting(&model, &d.scheme, params)?;
        let chosen = out.result(out.chosen).map(|r| r.strategy()).expect("chosen case solved");
        let sc = expected_social_cost(out.chosen, chosen, &model, params)?;
        Ok((d, sc_opt, out, chosen, sc))
    });
    match priced {
        Ok((d, sc_opt, out, chosen, sc)) => {
            row.sc_opt = Some(sc_opt);
            row.sc_with_pricing = Some(sc);
            row.sigma_with_pricing = Some(chosen);
            row.chosen = Some(out.chosen);
            row.stable = out.stable;
            row.ic_margins = out.ic_margins;
            row.scheme = Some(d.scheme);
        }
        Err(e) => problems.push(format!("pricing: {e}")),
    }
    row.status = if problems.is_empty() { "ok".into() } else { field(&problems.join("; ")) };
    row
}

/// Expected social cost with and without incomplete-information pricing
/// over a grid of low-type probabilities.
pub fn scenario_fig2(cfg: &ExperimentConfig, exec: Execution) -> Result<Fig2Result> {
    let params = cfg.game.params()?;
    let mut rows = map_indexed(exec, cfg.fig2.etas.len(), |k| fig2_row(cfg, &params, cfg.fig2.etas[k]));
    if cfg.fig2.empirical {
        let seeds = cfg.seeds();
        let svm = cfg.svm.config()?;
        for row in rows.iter_mut() {
            let model =
                BinaryTypeModel::new(cfg.fig2.alpha_low, cfg.fig2.alpha_high, row.eta, cfg.game.n_clients)?;
            row.empirical = map_indexed(exec, seeds.len(), |k| {
                let seed = seeds[k];
                let data = match generate_synthetic(&svm, model.n_clients, seed) {
                    Ok(d) => d,
                    Err(_) => return (seed, None, None),
                };
                let gap = |s: Option<TypeStrategy>| {
                    s.and_then(|s| empirical_binary_gap(cfg, &model, s, seed, &data, Execution::Sequential).ok())
                };
                (seed, gap(row.sigma_no_pricing), gap(row.sigma_with_pricing))
            });
        }
    }
    Ok(Fig2Result { rows })
}

pub const FIG2_COLUMNS: [&str; 25] = [
    "kind",
    "eta",
    "alpha_low",
    "alpha_high",
    "sc_no_pricing",
    "sc_with_pricing",
    "sc_opt",
    "gap",
    "chosen_case",
    "stable",
    "ic_margin_low",
    "ic_margin_high",
    "beta_low",
    "beta_high",
    "reward_low",
    "reward_high",
    "compensation",
    "sigma_low_no_pricing",
    "sigma_high_no_pricing",
    "sigma_low_with_pricing",
    "sigma_high_with_pricing",
    "emp_gap_no_pricing",
    "emp_gap_with_pricing",
    "draws",
    "status",
];

impl Fig2Result {
    /// One `theory` row per eta; with empirical runs enabled, one `seed` row
    /// per (eta, seed) follows.
    pub fn table(&self, cfg: &ExperimentConfig) -> Result<Table> {
        let mut t = Table::new("fig2", &columns(&FIG2_COLUMNS));
        let n = cfg.game.n_clients;
        let f2 = &cfg.fig2;
        for r in &self.rows {
            let scheme = r.scheme.as_ref();
            let beta = |ty: BinaryType| scheme.and_then(|s| s.beta_for_type(ty).ok());
            let mut row = param_values(cfg, cfg.seed, n)?;
            row.extend([
                "theory".to_string(),
                num(r.eta),
                num(f2.alpha_low),
                num(f2.alpha_high),
                opt_num(r.sc_no_pricing),
                opt_num(r.sc_with_pricing),
                opt_num(r.sc_opt),
                opt_num(r.gap()),
                r.chosen.map(|c| c.name().to_string()).unwrap_or_default(),
                r.stable.to_string(),
                opt_num(r.ic_margins.map(|m| m.0)),
                opt_num(r.ic_margins.map(|m| m.1)),
                opt_num(beta(BinaryType::Low)),
                opt_num(beta(BinaryType::High)),
                opt_num(scheme.map(|s| s.reward_low)),
                opt_num(scheme.map(|s| s.reward_high)),
                opt_num(scheme.map(|s| s.compensation)),
                opt_num(r.sigma_no_pricing.map(|s| s.low)),
                opt_num(r.sigma_no_pricing.map(|s| s.high)),
                opt_num(r.sigma_with_pricing.map(|s| s.low)),
                opt_num(r.sigma_with_pricing.map(|s| s.high)),
                opt_num(r.empirical_mean(|e| e.1)),
                opt_num(r.empirical_mean(|e| e.2)),
                if n > crate::mechanism::EXACT_SUM_MAX_CLIENTS { f2.compensation_draws.max(crate::mechanism::MIN_MC_DRAWS).to_string() } else { "0".into() },
                r.status.clone(),
            ]);
            t.push(row);
            t.summary.push(format!(
                "eta {}: no pricing {}, with pricing {}, case {}, {}",
                r.eta,
                r.sc_no_pricing.map_or("-".into(), |v| format!("{v:.6}")),
                r.sc_with_pricing.map_or("-".into(), |v| format!("{v:.6}")),
                r.chosen.map_or("-", |c| c.name()),
                r.status
            ));
        }
        for r in &self.rows {
            for (seed, np, p) in &r.empirical {
                let mut row = param_values(cfg, *seed, n)?;
                let mut rest = vec![String::new(); FIG2_COLUMNS.len()];
                rest[0] = "seed".into();
                rest[1] = num(r.eta);
                rest[2] = num(f2.alpha_low);
                rest[3] = num(f2.alpha_high);
                rest[17] = opt_num(r.sigma_no_pricing.map(|s| s.low));
                rest[18] = opt_num(r.sigma_no_pricing.map(|s| s.high));
                rest[19] = opt_num(r.sigma_with_pricing.map(|s| s.low));
                rest[20] = opt_num(r.sigma_with_pricing.map(|s| s.high));
                rest[21] = opt_num(*np);
                rest[22] = opt_num(*p);
                rest[24] = if np.is_some() && p.is_some() { "ok".into() } else { "missing run".into() };
                row.extend(rest);
                t.push(row);
            }
        }
        Ok(t)
    }
}
