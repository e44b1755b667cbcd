use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::LearningConfig;
use crate::error::{Error, Result};
use crate::flsim::SvmConfig;
use crate::game::GameParams;
use crate::privacy::PrivacyParams;

/// Game parameters shared by every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub n_clients: usize,
    pub rounds: usize,
    /// Noise multiplier; the smallest admissible value for `delta` if absent.
    pub c: Option<f64>,
    pub sensitivity: f64,
    pub delta: f64,
    pub l_smooth: f64,
    pub w0_dist: f64,
    pub alpha_floor: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for GameSection {
    fn default() -> Self {
        GameSection {
            n_clients: 20,
            rounds: 30,
            c: None,
            sensitivity: 1.0,
            delta: 1e-5,
            l_smooth: 1.0,
            w0_dist: 1.0,
            alpha_floor: 1e-4,
            sigma_min: 1e-6,
            sigma_max: 1e8,
        }
    }
}

impl GameSection {
    pub fn privacy(&self) -> Result<PrivacyParams> {
        match self.c {
            Some(c) => PrivacyParams::new(c, self.sensitivity, self.delta),
            None => PrivacyParams::minimal(self.sensitivity, self.delta),
        }
    }

    pub fn params(&self) -> Result<GameParams> {
        let learning = LearningConfig::new(self.l_smooth, self.w0_dist, self.rounds)?;
        GameParams::new(self.privacy()?, learning)
            .with_sigma_bounds(self.sigma_min, self.sigma_max)?
            .with_alpha_floor(self.alpha_floor)
    }
}

/// Normally distributed types swept over a variance grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig1Section {
    pub mean: f64,
    pub variances: Vec<f64>,
    pub grid_points: usize,
    pub max_sweeps: usize,
}

impl Default for Fig1Section {
    fn default() -> Self {
        Fig1Section {
            mean: 0.5,
            variances: vec![0.0, 0.0025, 0.005, 0.01, 0.015, 0.02, 0.03, 0.04],
            grid_points: 400,
            max_sweeps: 500,
        }
    }
}

/// Binary types swept over the low-type probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Section {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub etas: Vec<f64>,
    pub compensation_draws: usize,
    /// Also train with the equilibrium noise levels and report loss gaps.
    pub empirical: bool,
}

impl Default for Fig2Section {
    fn default() -> Self {
        Fig2Section {
            alpha_low: 0.25,
            alpha_high: 0.75,
            etas: (1..10).map(|k| k as f64 / 10.0).collect(),
            compensation_draws: 100_000,
            empirical: false,
        }
    }
}

/// Boundary sweep: one client at `1 - floor`, the rest at `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoaSection {
    pub floors: Vec<f64>,
    pub sigma_max: f64,
}

impl Default for PoaSection {
    fn default() -> Self {
        PoaSection {
            floors: (0..11).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect(),
            sigma_max: 1e16,
        }
    }
}

/// Which noise levels the traced federation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceNoise {
    Ne,
    So,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Mle,
}

/// One federation run with per-round prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub noise: TraceNoise,
    pub alpha_mean: f64,
    pub alpha_variance: f64,
    pub aggregation: AggregationKind,
    pub pricing: bool,
    /// Multiplies the game's noise levels before training.
    pub sigma_scale: f64,
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            noise: TraceNoise::So,
            alpha_mean: 0.5,
            alpha_variance: 0.01,
            aggregation: AggregationKind::Mle,
            pricing: true,
            sigma_scale: 0.01,
        }
    }
}

/// Seeded runs comparing the empirical loss gap with the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    pub n_clients: usize,
    pub runs: usize,
    pub sigmas: Vec<f64>,
    pub data_seed: u64,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            n_clients: 10,
            runs: 50,
            sigmas: (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 9.0)).collect(),
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub lambda_reg: f64,
    pub dim: usize,
    pub samples_per_client: usize,
    pub margin: f64,
    pub label_noise: f64,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmConfig::default();
        SvmSection {
            lambda_reg: d.lambda_reg,
            dim: d.dim,
            samples_per_client: d.samples_per_client,
            margin: d.margin,
            label_noise: d.label_noise,
        }
    }
}

impl SvmSection {
    pub fn config(&self) -> Result<SvmConfig> {
        let cfg = SvmConfig {
            lambda_reg: self.lambda_reg,
            dim: self.dim,
            samples_per_client: self.samples_per_client,
            margin: self.margin,
            label_noise: self.label_noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full experiment description. Seeds are `seed, seed + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_seeds: usize,
    pub game: GameSection,
    pub svm: SvmSection,
    pub fig1: Fig1Section,
    pub fig2: Fig2Section,
    pub poa: PoaSection,
    pub trace: TraceSection,
    pub bound: BoundSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n_seeds: 20,
            game: GameSection::default(),
            svm: SvmSection::default(),
            fig1: Fig1Section::default(),
            fig2: Fig2Section::default(),
            poa: PoaSection::default(),
            trace: TraceSection::default(),
            bound: BoundSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }

    /// Parses TOML text, then applies `key=value` overrides (dotted keys,
    /// TOML values; anything that does not parse is taken as a string).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override {item:?} has an empty key")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {item:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml_with_overrides("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.seeds().len(), 20);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = ExperimentConfig::from_toml_with_overrides(
            "seed = 3\n[game]\nn_clients = 5\n",
            &["game.n_clients=7".into(), "fig2.etas=[0.2, 0.4]".into(), "trace.noise=ne".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.game.n_clients, 7);
        assert_eq!(c.fig2.etas, vec![0.2, 0.4]);
        assert_eq!(c.trace.noise, TraceNoise::Ne);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_with_overrides("[game]\nnclients = 5\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_with_overrides("", &["game.bogus=1".into()]).is_err());
        assert!(ExperimentConfig::from_toml_with_overrides("", &["novalue".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_with_overrides(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn game_section_builds_params() {
        let p = GameSection::default().params().unwrap();
        assert_eq!(p.kappa(), 16.0);
        assert!((p.privacy.c() - 4.844805262605389).abs() < 1e-12);
        let bad = GameSection { c: Some(1.0), ..GameSection::default() };
        assert!(bad.params().is_err());
    }
}
