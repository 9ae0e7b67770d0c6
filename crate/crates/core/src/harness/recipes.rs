use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::scenario::{DetectorKind, Scenario, StatisticSource};
use crate::error::{Error, Result};

/// Shape factors of the LoS tap swept by every figure.
pub const FIGURE_K0: [f64; 3] = [0.0, 2.0, 10.0];
/// Maximum Doppler of the time-variant figures, Hz.
pub const TIME_VARIANT_DOPPLER_HZ: f64 = 5.0;
/// Preamble packets used for the estimated-statistics curves.
pub const ESTIMATION_PACKETS: usize = 50;
/// Per-packet drift of the statistics in the estimation figure, percent.
pub const ESTIMATION_DRIFT_PERCENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeId {
    /// Time-invariant channel, all detectors.
    Fig1,
    /// `f_d` = 5 Hz, all detectors.
    Fig2,
    /// NC-ML with perfect against estimated statistics.
    Fig3,
    /// Fig. 1 grid pushed down to SER 1e-4; not a desk-scale run.
    Fig1Extended,
}

impl RecipeId {
    pub const ALL: [RecipeId; 4] = [RecipeId::Fig1, RecipeId::Fig2, RecipeId::Fig3, RecipeId::Fig1Extended];
    /// Recipes run by `figures` when none is named.
    pub const DESK: [RecipeId; 3] = [RecipeId::Fig1, RecipeId::Fig2, RecipeId::Fig3];

    pub fn id(&self) -> &'static str {
        match self {
            RecipeId::Fig1 => "fig1",
            RecipeId::Fig2 => "fig2",
            RecipeId::Fig3 => "fig3",
            RecipeId::Fig1Extended => "fig1-extended",
        }
    }
}

impl fmt::Display for RecipeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for RecipeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RecipeId::ALL
            .into_iter()
            .find(|r| r.id() == s)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown recipe {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub id: RecipeId,
    pub title: String,
    pub scenarios: Vec<Scenario>,
}

impl Recipe {
    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.id)
    }

    pub fn scenario(&self, name: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Override the root seed of every scenario.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in &mut self.scenarios {
            s.seed = seed;
        }
        self
    }
}

pub fn k0_tag(k0: f64) -> String {
    format!("k{k0}")
}

/// Scenario name used by a recipe for one `K₀`, e.g. `fig2-k10`.
pub fn scenario_name(id: RecipeId, k0: f64) -> String {
    format!("{id}-{}", k0_tag(k0))
}

/// Fig. 3 scenario name for one `K₀` and statistics source.
pub fn estimation_scenario_name(k0: f64, estimated: bool) -> String {
    let src = if estimated { "estimated" } else { "perfect" };
    format!("fig3-{}-{src}", k0_tag(k0))
}

fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + step * i as f64).collect()
}

const FIGURE_DETECTORS: [DetectorKind; 5] = [
    DetectorKind::Conventional,
    DetectorKind::Coherent,
    DetectorKind::NcMl,
    DetectorKind::TdelOriginal,
    DetectorKind::TdelModified,
];

/// Independent error events (packets with errors) required per point.
pub const MIN_ERROR_PACKETS: u64 = 100;

fn desk_base() -> Scenario {
    Scenario {
        min_errors: 200,
        min_error_packets: MIN_ERROR_PACKETS,
        max_symbols: 2_000_000,
        ser_stop: Some(5e-4),
        batch_packets: 16,
        ..Default::default()
    }
}

fn detector_sweep(id: RecipeId, doppler_hz: f64, base: &Scenario, snr: impl Fn(f64) -> Vec<f64>) -> Vec<Scenario> {
    FIGURE_K0
        .iter()
        .map(|&k0| Scenario {
            name: scenario_name(id, k0),
            k0,
            doppler_hz,
            snr_db: snr(k0),
            detectors: FIGURE_DETECTORS.to_vec(),
            ..base.clone()
        })
        .collect()
}

fn desk_grid(k0: f64) -> Vec<f64> {
    if k0 >= 10.0 {
        grid(-10.0, 16.0, 2.0)
    } else {
        grid(-6.0, 28.0, 2.0)
    }
}

pub fn recipe(id: RecipeId) -> Recipe {
    match id {
        RecipeId::Fig1 => Recipe {
            id,
            title: "SER in a time-invariant channel (f_d = 0 Hz)".into(),
            scenarios: detector_sweep(id, 0.0, &desk_base(), desk_grid),
        },
        RecipeId::Fig2 => Recipe {
            id,
            title: "SER in a time-variant channel (f_d = 5 Hz)".into(),
            scenarios: detector_sweep(id, TIME_VARIANT_DOPPLER_HZ, &desk_base(), desk_grid),
        },
        RecipeId::Fig3 => {
            let mut scenarios = Vec::new();
            for &k0 in &FIGURE_K0 {
                for estimated in [false, true] {
                    scenarios.push(Scenario {
                        name: estimation_scenario_name(k0, estimated),
                        k0,
                        doppler_hz: TIME_VARIANT_DOPPLER_HZ,
                        drift_percent: ESTIMATION_DRIFT_PERCENT,
                        snr_db: desk_grid(k0),
                        detectors: vec![DetectorKind::NcMl],
                        statistics: if estimated {
                            StatisticSource::Estimated {
                                packets: ESTIMATION_PACKETS,
                            }
                        } else {
                            StatisticSource::Perfect
                        },
                        ..desk_base()
                    });
                }
            }
            Recipe {
                id,
                title: "NC-ML with perfect and estimated channel statistics".into(),
                scenarios,
            }
        }
        RecipeId::Fig1Extended => {
            let base = Scenario {
                min_errors: 200,
                min_error_packets: MIN_ERROR_PACKETS,
                max_symbols: 10_000_000,
                ser_stop: Some(2e-5),
                batch_packets: 64,
                ..Default::default()
            };
            Recipe {
                id,
                title: "SER in a time-invariant channel down to 1e-4".into(),
                scenarios: detector_sweep(id, 0.0, &base, |k0| {
                    if k0 >= 10.0 {
                        grid(-10.0, 22.0, 1.0)
                    } else {
                        grid(-6.0, 36.0, 1.0)
                    }
                }),
            }
        }
    }
}

#[derive(Serialize)]
struct RecipeFile<'a> {
    figure: Vec<RecipeEntry<'a>>,
}

#[derive(Serialize)]
struct RecipeEntry<'a> {
    id: &'a str,
    title: &'a str,
    csv: String,
    scenarios: Vec<&'a str>,
}

/// TOML listing which scenarios (and which CSV) reproduce each figure.
pub fn recipe_file(recipes: &[Recipe]) -> String {
    let file = RecipeFile {
        figure: recipes
            .iter()
            .map(|r| RecipeEntry {
                id: r.id.id(),
                title: &r.title,
                csv: r.csv_name(),
                scenarios: r.scenarios.iter().map(|s| s.name.as_str()).collect(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("recipe file serializes")
}
