use super::{columns, num, param_values, status, ExperimentConfig, Table};
use crate::error::Result;
use crate::game::{price_of_anarchy, TypeProfile};

#[derive(Debug, Clone)]
pub struct PoaPoint {
    pub floor: f64,
    pub gamma: f64,
    pub sc_ne: f64,
    pub sc_opt: f64,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct PoaResult {
    pub points: Vec<PoaPoint>,
}

impl PoaResult {
    pub fn max_gamma(&self) -> f64 {
        self.points.iter().filter(|p| p.status == "ok").map(|p| p.gamma).fold(f64::NAN, f64::max)
    }

    /// Gamma never decreases over the solved prefix.
    pub fn monotone(&self) -> bool {
        let g: Vec<f64> = self.points.iter().filter(|p| p.status == "ok").map(|p| p.gamma).collect();
        g.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Pushes one client's type to `1 - floor` and the others to `floor` while
/// the floor shrinks. Stops at the first unsolved point.
pub fn scenario_poa(cfg: &ExperimentConfig) -> Result<PoaResult> {
    let base = cfg.game.params()?.with_sigma_bounds(cfg.game.sigma_min, cfg.poa.sigma_max)?;
    let n = cfg.game.n_clients;
    let mut points = Vec::new();
    for &floor in &cfg.poa.floors {
        let r = base.with_alpha_floor(floor).and_then(|p| {
            let mut alphas = vec![floor; n];
            alphas[0] = 1.0 - floor;
            price_of_anarchy(&TypeProfile::new(alphas, floor)?, &p)
        });
        let st = status(&r);
        match r {
            Ok(e) => points.push(PoaPoint { floor, gamma: e.gamma, sc_ne: e.sc_ne, sc_opt: e.sc_opt, status: st }),
            Err(_) => {
                points.push(PoaPoint { floor, gamma: f64::NAN, sc_ne: f64::NAN, sc_opt: f64::NAN, status: st });
                break;
            }
        }
    }
    Ok(PoaResult { points })
}

impl PoaResult {
    pub fn table(&self, cfg: &ExperimentConfig) -> Result<Table> {
        let mut t = Table::new("poa", &columns(&["index", "floor", "sigma_max", "gamma", "sc_ne", "sc_opt", "status"]));
        for (i, p) in self.points.iter().enumerate() {
            let mut row = param_values(cfg, cfg.seed, cfg.game.n_clients)?;
            row[8] = num(p.floor);
            row.extend([
                i.to_string(),
                num(p.floor),
                num(cfg.poa.sigma_max),
                num(p.gamma),
                num(p.sc_ne),
                num(p.sc_opt),
                p.status.clone(),
            ]);
            t.push(row);
            t.summary.push(format!("floor {:e}: gamma {:.6} ({})", p.floor, p.gamma, p.status));
        }
        Ok(t)
    }
}
