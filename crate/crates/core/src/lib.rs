//! Privacy/accuracy noise game for federated learning: noise calibration,
//! equilibrium and optimum solvers, pricing mechanisms and a small
//! federated training simulator.

pub mod aggregation;
pub mod binomial;
pub mod error;
pub mod experiment;
pub mod flsim;
pub mod game;
pub mod mechanism;
pub mod montecarlo;
pub mod par;
pub mod privacy;
pub mod rootfind;

pub use error::{Error, Result};
