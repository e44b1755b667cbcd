//! Named scenarios that sweep the game and the mechanisms and emit CSV
//! tables. Grid cells run in parallel; rows come out in grid order.

mod config;
mod fig1;
mod fig2;
mod poa;
mod runs;
mod table;

pub use config::*;
pub use fig1::*;
pub use fig2::*;
pub use poa::*;
pub use runs::*;
pub use table::*;

use crate::error::{Error, Result};
use crate::par::Execution;

pub const SCENARIOS: [&str; 5] = ["fig1", "fig2", "poa", "trace", "bound"];

/// Columns that let any row be replayed on its own.
pub(crate) const PARAM_COLUMNS: [&str; 9] =
    ["seed", "n_clients", "rounds", "c", "sensitivity", "delta", "l_smooth", "w0_dist", "alpha_floor"];

pub(crate) fn param_values(cfg: &ExperimentConfig, seed: u64, n_clients: usize) -> Result<Vec<String>> {
    let g = &cfg.game;
    let privacy = g.privacy()?;
    Ok(vec![
        seed.to_string(),
        n_clients.to_string(),
        g.rounds.to_string(),
        num(privacy.c()),
        num(g.sensitivity),
        num(g.delta),
        num(g.l_smooth),
        num(g.w0_dist),
        num(g.alpha_floor),
    ])
}

pub(crate) fn columns(extra: &[&'static str]) -> Vec<&'static str> {
    PARAM_COLUMNS.iter().copied().chain(extra.iter().copied()).collect()
}

pub fn run_scenario(name: &str, cfg: &ExperimentConfig, exec: Execution) -> Result<Table> {
    match name {
        "fig1" => scenario_fig1(cfg, exec)?.table(cfg),
        "fig2" => scenario_fig2(cfg, exec)?.table(cfg),
        "poa" => scenario_poa(cfg)?.table(cfg),
        "trace" => scenario_trace(cfg, exec)?.table(cfg),
        "bound" => scenario_bound(cfg, exec)?.table(cfg),
        other => Err(Error::Config(format!(
            "unknown scenario {other:?}; expected one of {}",
            SCENARIOS.join(", ")
        ))),
    }
}
