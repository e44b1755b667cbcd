use rand_distr::{Distribution, StandardNormal};

use super::{columns, num, param_values, status, ExperimentConfig, Table};
use crate::error::Result;
use crate::game::{
    best_response_dynamics, social_cost, solve_ne_complete, solve_so_complete, DynamicsOptions, TypeProfile,
};
use crate::mechanism::design_complete;
use crate::montecarlo::stream_rng;
use crate::par::{map_indexed, Execution};

/// Normal types with the given mean and variance, clamped to the floor. The
/// standard-normal draws depend only on `seed`, so every variance reuses
/// them.
pub fn normal_types(n: usize, mean: f64, variance: f64, floor: f64, seed: u64) -> Result<TypeProfile> {
    let mut rng = stream_rng(seed, 0);
    let sd = variance.max(0.0).sqrt();
    let alphas = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (mean + sd * z).clamp(floor, 1.0 - floor)
        })
        .collect();
    TypeProfile::new(alphas, floor)
}

/// One (variance, seed) cell.
#[derive(Debug, Clone)]
pub struct Fig1Cell {
    pub variance: f64,
    pub seed: u64,
    pub sc_no_pricing: f64,
    pub sc_with_pricing: f64,
    pub sc_opt: f64,
    pub status: String,
}

impl Fig1Cell {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Seed averages over the cells that solved completely.
#[derive(Debug, Clone)]
pub struct Fig1Point {
    pub variance: f64,
    pub sc_no_pricing: f64,
    pub sc_with_pricing: f64,
    pub sc_opt: f64,
    pub solved: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct Fig1Result {
    pub cells: Vec<Fig1Cell>,
    pub points: Vec<Fig1Point>,
}

fn fig1_cell(cfg: &ExperimentConfig, variance: f64, seed: u64) -> Fig1Cell {
    let mut cell = Fig1Cell {
        variance,
        seed,
        sc_no_pricing: f64::NAN,
        sc_with_pricing: f64::NAN,
        sc_opt: f64::NAN,
        status: String::new(),
    };
    let run = |cell: &mut Fig1Cell| -> Result<()> {
        let params = cfg.game.params()?;
        let alphas = normal_types(cfg.game.n_clients, cfg.fig1.mean, variance, params.alpha_floor, seed)?;
        let ne = solve_ne_complete(&alphas, &params)?;
        let so = solve_so_complete(&alphas, &params)?;
        cell.sc_no_pricing = social_cost(&alphas, &ne, &params)?;
        cell.sc_opt = social_cost(&alphas, &so, &params)?;
        let scheme = design_complete(&alphas, &so, &params)?;
        let betas: Vec<f64> = (0..alphas.len()).map(|i| scheme.beta_for_client(i)).collect::<Result<_>>()?;
        let opts = DynamicsOptions {
            max_sweeps: cfg.fig1.max_sweeps,
            grid_points: cfg.fig1.grid_points,
            ..DynamicsOptions::default()
        };
        let priced = best_response_dynamics(&alphas, &betas, &params, ne.as_slice(), opts)?;
        cell.sc_with_pricing = social_cost(&alphas, &priced, &params)?;
        Ok(())
    };
    let r = run(&mut cell);
    cell.status = status(&r);
    cell
}

/// Social cost without pricing, with complete-information pricing, and at
/// the optimum, for normally distributed types over a variance grid.
pub fn scenario_fig1(cfg: &ExperimentConfig, exec: Execution) -> Result<Fig1Result> {
    cfg.game.params()?;
    let seeds = cfg.seeds();
    let variances = &cfg.fig1.variances;
    let ns = seeds.len();
    let cells = map_indexed(exec, variances.len() * ns, |k| fig1_cell(cfg, variances[k / ns], seeds[k % ns]));
    let points = variances
        .iter()
        .enumerate()
        .map(|(vi, &variance)| {
            let group = &cells[vi * ns..(vi + 1) * ns];
            let ok: Vec<&Fig1Cell> = group.iter().filter(|c| c.ok()).collect();
            let mean = |f: fn(&Fig1Cell) -> f64| ok.iter().map(|c| f(c)).sum::<f64>() / ok.len() as f64;
            Fig1Point {
                variance,
                sc_no_pricing: mean(|c| c.sc_no_pricing),
                sc_with_pricing: mean(|c| c.sc_with_pricing),
                sc_opt: mean(|c| c.sc_opt),
                solved: ok.len(),
                failed: group.len() - ok.len(),
            }
        })
        .collect();
    Ok(Fig1Result { cells, points })
}

impl Fig1Result {
    /// Per-seed rows (`kind = seed`) followed by one averaged row per
    /// variance (`kind = mean`, seed = first seed).
    pub fn table(&self, cfg: &ExperimentConfig) -> Result<Table> {
        let cols = columns(&[
            "kind",
            "alpha_mean",
            "variance",
            "sc_no_pricing",
            "sc_with_pricing",
            "sc_opt",
            "solved",
            "status",
        ]);
        let mut t = Table::new("fig1", &cols);
        let n = cfg.game.n_clients;
        for c in &self.cells {
            let mut row = param_values(cfg, c.seed, n)?;
            row.extend([
                "seed".into(),
                num(cfg.fig1.mean),
                num(c.variance),
                num(c.sc_no_pricing),
                num(c.sc_with_pricing),
                num(c.sc_opt),
                usize::from(c.ok()).to_string(),
                c.status.clone(),
            ]);
            t.push(row);
        }
        for p in &self.points {
            let mut row = param_values(cfg, cfg.seed, n)?;
            row.extend([
                "mean".into(),
                num(cfg.fig1.mean),
                num(p.variance),
                num(p.sc_no_pricing),
                num(p.sc_with_pricing),
                num(p.sc_opt),
                p.solved.to_string(),
                if p.failed == 0 { "ok".into() } else { format!("{} failed", p.failed) },
            ]);
            t.push(row);
            t.summary.push(format!(
                "variance {}: no pricing {:.6}, with pricing {:.6}, optimum {:.6} ({} of {} seeds solved)",
                p.variance,
                p.sc_no_pricing,
                p.sc_with_pricing,
                p.sc_opt,
                p.solved,
                p.solved + p.failed
            ));
        }
        Ok(t)
    }
}
