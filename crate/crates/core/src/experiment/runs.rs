use super::{columns, num, param_values, AggregationKind, ExperimentConfig, Table, TraceNoise};
use crate::aggregation::{convergence_bound, delta_mean, delta_mle, LearningConfig, NoiseProfile};
use crate::error::Result;
use crate::flsim::{
    empirical_loss_gap, estimate_l_smooth, generate_synthetic, reference_optimum, run_federation, AggregationRule,
    Dataset, FederationConfig, FederationTrace, RoundPricing,
};
use crate::game::{solve_ne_complete, solve_so_complete};
use crate::mechanism::{design_complete, PriceMode, PricingScheme};
use crate::par::{map_indexed, Execution};

use super::normal_types;

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub alphas: Vec<f64>,
    pub trace: FederationTrace,
    pub reference_loss: f64,
}

/// One federation with game-derived noise levels and, optionally,
/// complete-information prices charged every round.
pub fn scenario_trace(cfg: &ExperimentConfig, exec: Execution) -> Result<TraceResult> {
    let params = cfg.game.params()?;
    let tr = &cfg.trace;
    let n = cfg.game.n_clients;
    let alphas = normal_types(n, tr.alpha_mean, tr.alpha_variance, params.alpha_floor, cfg.seed)?;
    let so = solve_so_complete(&alphas, &params)?;
    let game_sigma = match tr.noise {
        TraceNoise::Ne => solve_ne_complete(&alphas, &params)?.into_vec(),
        TraceNoise::So => so.as_slice().to_vec(),
        TraceNoise::None => vec![0.0; n],
    };
    let noise: Vec<f64> = game_sigma.iter().map(|s| s * tr.sigma_scale).collect();
    let svm = cfg.svm.config()?;
    let data = generate_synthetic(&svm, n, cfg.seed)?;
    let reference = reference_optimum(&data, &svm)?;
    let pooled = Dataset::pooled(&data)?;
    let learning = LearningConfig::new(estimate_l_smooth(&pooled, &svm), 1.0, cfg.game.rounds)?;
    let pricing = if tr.pricing {
        // Calibrated at the game's noise; penalties rescaled so the expected
        // noise penalty is unchanged at the simulated noise.
        let designed = design_complete(&alphas, &so, &params)?;
        let k = if tr.sigma_scale > 0.0 { tr.sigma_scale * tr.sigma_scale } else { 1.0 };
        let betas = (0..n).map(|i| designed.beta_for_client(i).map(|b| b / k)).collect::<Result<Vec<_>>>()?;
        Some(RoundPricing {
            scheme: PricingScheme::per_client(betas, designed.compensation)?.with_calibration(noise.clone()),
            mode: PriceMode::Complete,
            reports: alphas.as_slice().to_vec(),
        })
    } else {
        None
    };
    let agg = match tr.aggregation {
        AggregationKind::Mean => AggregationRule::Mean,
        AggregationKind::Mle if noise.iter().all(|s| *s > 0.0) => AggregationRule::Mle,
        AggregationKind::Mle => AggregationRule::Mean,
    };
    let trace = run_federation(&data, &noise, &agg, pricing.as_ref(), &FederationConfig::new(svm, learning), cfg.seed, exec)?;
    Ok(TraceResult { alphas: alphas.as_slice().to_vec(), trace, reference_loss: reference.loss })
}

impl TraceResult {
    pub fn table(&self, cfg: &ExperimentConfig) -> Result<Table> {
        let mut t = Table::new("trace", &["round", "client", "sigma", "price", "global_loss"]);
        let params = param_values(cfg, cfg.seed, cfg.game.n_clients)?;
        let pairs: Vec<String> = super::PARAM_COLUMNS.iter().zip(&params).map(|(k, v)| format!("{k}={v}")).collect();
        t.comments.push(pairs.join(" "));
        t.comments.push(format!(
            "noise={:?} sigma_scale={} aggregation={:?} pricing={} reference_loss={}",
            cfg.trace.noise, cfg.trace.sigma_scale, cfg.trace.aggregation, cfg.trace.pricing, num(self.reference_loss)
        ));
        for r in &self.trace.rounds {
            for (i, s) in self.trace.sigmas.iter().enumerate() {
                let price = r.prices.get(i).copied().unwrap_or(0.0);
                t.push(vec![r.round.to_string(), i.to_string(), num(*s), num(price), num(r.loss)]);
            }
        }
        let n = self.trace.sigmas.len().max(1) as f64;
        let final_loss = self.trace.final_loss().unwrap_or(f64::NAN);
        t.push(vec![
            "summary".into(),
            "all".into(),
            num(self.trace.sigmas.iter().sum::<f64>() / n),
            num(self.trace.cumulative_prices.iter().sum()),
            num(final_loss),
        ]);
        t.summary.push(format!(
            "{} rounds, final loss {:.6}, gap {:.6e}, total prices {:.6}",
            self.trace.rounds.len(),
            final_loss,
            final_loss - self.reference_loss,
            self.trace.cumulative_prices.iter().sum::<f64>()
        ));
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct BoundRun {
    pub seed: u64,
    pub gap_mle: f64,
    pub gap_mean: f64,
}

#[derive(Debug, Clone)]
pub struct BoundResult {
    pub runs: Vec<BoundRun>,
    pub delta_mle: f64,
    pub delta_mean: f64,
    pub bound_mle: f64,
    pub bound_mean: f64,
    pub l_smooth: f64,
    pub w0_dist: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

impl BoundResult {
    pub fn mle_stats(&self) -> (f64, f64) {
        mean_se(&self.runs.iter().map(|r| r.gap_mle).collect::<Vec<_>>())
    }

    pub fn mean_stats(&self) -> (f64, f64) {
        mean_se(&self.runs.iter().map(|r| r.gap_mean).collect::<Vec<_>>())
    }

    /// Seed-paired mean of `gap_mean - gap_mle` and its standard error.
    pub fn paired_advantage(&self) -> (f64, f64) {
        mean_se(&self.runs.iter().map(|r| r.gap_mean - r.gap_mle).collect::<Vec<_>>())
    }
}

/// Empirical loss gap of MLE and mean aggregation over seeded runs on fixed
/// synthetic data, against the convergence bound of each rule.
pub fn scenario_bound(cfg: &ExperimentConfig, exec: Execution) -> Result<BoundResult> {
    let b = &cfg.bound;
    let noise = NoiseProfile::new(b.sigmas.clone())?;
    if noise.len() != b.n_clients {
        return Err(crate::error::Error::Config(format!(
            "bound.sigmas has {} entries for {} clients",
            noise.len(),
            b.n_clients
        )));
    }
    let svm = cfg.svm.config()?;
    let data = generate_synthetic(&svm, b.n_clients, b.data_seed)?;
    let reference = reference_optimum(&data, &svm)?;
    let pooled = Dataset::pooled(&data)?;
    let l_smooth = estimate_l_smooth(&pooled, &svm);
    let w0_dist = reference.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let learning = LearningConfig::new(l_smooth, w0_dist, cfg.game.rounds)?;
    let fc = FederationConfig::new(svm, learning);
    let seeds: Vec<u64> = (0..b.runs as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let runs = map_indexed(exec, seeds.len(), |k| -> Result<BoundRun> {
        let seed = seeds[k];
        let gap = |rule: &AggregationRule| -> Result<f64> {
            let tr = run_federation(&data, noise.as_slice(), rule, None, &fc, seed, Execution::Sequential)?;
            empirical_loss_gap(&tr, &reference)
        };
        Ok(BoundRun { seed, gap_mle: gap(&AggregationRule::Mle)?, gap_mean: gap(&AggregationRule::Mean)? })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (dm, da) = (delta_mle(&noise), delta_mean(&noise));
    Ok(BoundResult {
        runs,
        delta_mle: dm,
        delta_mean: da,
        bound_mle: convergence_bound(dm, &learning)?,
        bound_mean: convergence_bound(da, &learning)?,
        l_smooth,
        w0_dist,
    })
}

impl BoundResult {
    /// Per-seed rows, then `mean` and `stderr` rows.
    pub fn table(&self, cfg: &ExperimentConfig) -> Result<Table> {
        let cols = columns(&[
            "kind", "l_smooth_est", "w0_dist_est", "delta_mle", "delta_mean", "bound_mle", "bound_mean", "gap_mle",
            "gap_mean",
        ]);
        let mut t = Table::new("bound", &cols);
        let n = cfg.bound.n_clients;
        let fixed = |kind: &str| {
            vec![
                kind.to_string(),
                num(self.l_smooth),
                num(self.w0_dist),
                num(self.delta_mle),
                num(self.delta_mean),
                num(self.bound_mle),
                num(self.bound_mean),
            ]
        };
        for r in &self.runs {
            let mut row = param_values(cfg, r.seed, n)?;
            row.extend(fixed("seed"));
            row.extend([num(r.gap_mle), num(r.gap_mean)]);
            t.push(row);
        }
        let (m1, s1) = self.mle_stats();
        let (m2, s2) = self.mean_stats();
        for (kind, a, b) in [("mean", m1, m2), ("stderr", s1, s2)] {
            let mut row = param_values(cfg, cfg.seed, n)?;
            row.extend(fixed(kind));
            row.extend([num(a), num(b)]);
            t.push(row);
        }
        t.comments.push(format!("sigmas={:?} data_seed={}", cfg.bound.sigmas, cfg.bound.data_seed));
        t.summary.push(format!(
            "MLE gap {m1:.6e} +- {s1:.2e} (bound {:.6e}); mean-aggregation gap {m2:.6e} +- {s2:.2e} (bound {:.6e})",
            self.bound_mle, self.bound_mean
        ));
        Ok(t)
    }
}
