//! LoRa chirp-spread-spectrum link simulation over Rician multipath fading.
//!
//! The crate models the modem (chirps, dechirping, DFT), a tapped-delay-line
//! channel with Rician LoS and Doppler, several symbol detectors, a
//! moment-based estimator of the channel statistics, and a seeded Monte
//! Carlo harness.

pub mod bessel;
pub mod channel;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod modem;

pub use channel::{ChannelProfile, ChannelRealization, Convolution, FadingGenerator, PathTable};
pub use detect::{
    build_tdel_reference, detect_coherent_ml, detect_conventional, detect_nc_ml, detect_tdel, ChannelStatistics,
    DetectionDecision, NcMlDetector, TdelReference, TdelVariant,
};
pub use error::{Error, Result};
pub use estimate::{estimate_statistics, EstimatedStatistics, StatisticAccumulator};
pub use harness::{run_scenario, DetectorKind, Scenario, SerRecord, StatisticSource};
pub use modem::{DechirpedSpectrum, LoRaConfig, LoRaSymbol, Modem};
