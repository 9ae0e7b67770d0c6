//! Seeded Monte Carlo sweeps over SNR, with figure recipes, acceptance
//! checks and a complexity benchmark.

pub mod bench;
pub mod checks;
pub mod engine;
pub mod output;
pub mod recipes;
pub mod rng;
pub mod scenario;

pub use engine::{fingerprint, run_scenario, run_scenario_with, RunOptions, SerRecord};
pub use output::{read_csv, to_csv_string, write_csv};
pub use recipes::{recipe, Recipe, RecipeId};
pub use scenario::{DetectorKind, Scenario, StatisticSource};
