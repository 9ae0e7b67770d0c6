use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{profile_from_path_table, ChannelProfile, Convolution, PathTable};
use crate::error::{Error, Result};
use crate::modem::LoRaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DetectorKind {
    /// Strongest bin.
    Conventional,
    /// Coherent ML with the taps of the packet's first symbol (stale under Doppler).
    Coherent,
    /// Coherent ML with the true taps of every symbol.
    CoherentGenie,
    /// Noncoherent ML from channel statistics.
    NcMl,
    /// TDEL with the quarter-amplitude template.
    TdelOriginal,
    /// TDEL with the template restricted to the tap layout.
    TdelModified,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::Conventional,
        DetectorKind::Coherent,
        DetectorKind::CoherentGenie,
        DetectorKind::NcMl,
        DetectorKind::TdelOriginal,
        DetectorKind::TdelModified,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            DetectorKind::Conventional => "conventional",
            DetectorKind::Coherent => "coherent",
            DetectorKind::CoherentGenie => "coherent-genie",
            DetectorKind::NcMl => "ncml",
            DetectorKind::TdelOriginal => "tdel-orig",
            DetectorKind::TdelModified => "tdel-mod",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.id() == s)
            .ok_or_else(|| Error::UnknownDetector(s.to_string()))
    }
}

impl TryFrom<String> for DetectorKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DetectorKind> for String {
    fn from(d: DetectorKind) -> Self {
        d.id().to_string()
    }
}

/// Where the noncoherent detector gets its channel statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StatisticSource {
    /// Nominal profile values and the true noise variance.
    #[default]
    Perfect,
    /// Moment estimates from the preambles of `packets` separate packets,
    /// re-estimated at every SNR point.
    Estimated { packets: usize },
    /// Tap powers and `K₀` from a statistics file; noise variance from the SNR point.
    File { path: PathBuf },
}

impl StatisticSource {
    pub fn label(&self) -> String {
        match self {
            StatisticSource::Perfect => "perfect".into(),
            StatisticSource::Estimated { packets } => format!("estimated-{packets}"),
            StatisticSource::File { path } => format!("file:{}", path.display()),
        }
    }
}

/// One simulation sweep over an SNR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub sf: u32,
    pub bandwidth_hz: f64,
    /// Informational; the Doppler spread is given directly.
    pub carrier_hz: f64,
    /// Built-in path table name (`eva`); ignored when `profile_file` is set.
    pub profile: String,
    /// Plain-text `delay_ns power_db` table.
    pub profile_file: Option<PathBuf>,
    pub k0: f64,
    pub doppler_hz: f64,
    /// Per-packet uniform drift of tap powers and `K₀`, in percent.
    pub drift_percent: f64,
    pub snr_db: Vec<f64>,
    pub payload_symbols: usize,
    pub preamble_symbols: usize,
    pub detectors: Vec<DetectorKind>,
    pub statistics: StatisticSource,
    pub convolution: Convolution,
    pub seed: u64,
    pub min_errors: u64,
    /// Packets containing at least one error, also required before a point
    /// stops. Errors cluster within a packet because its channel is fixed or
    /// slowly varying, so this is the count of independent error events.
    pub min_error_packets: u64,
    pub max_symbols: u64,
    /// Stop simulating a detector at higher SNRs once its SER drops below this.
    pub ser_stop: Option<f64>,
    /// Packets per deterministic work batch.
    pub batch_packets: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            sf: 7,
            bandwidth_hz: 500e3,
            carrier_hz: 915e6,
            profile: "eva".into(),
            profile_file: None,
            k0: 0.0,
            doppler_hz: 0.0,
            drift_percent: 0.0,
            snr_db: (0..=15).map(|i| 2.0 * i as f64).collect(),
            payload_symbols: 100,
            preamble_symbols: 8,
            detectors: vec![
                DetectorKind::Conventional,
                DetectorKind::Coherent,
                DetectorKind::NcMl,
                DetectorKind::TdelOriginal,
                DetectorKind::TdelModified,
            ],
            statistics: StatisticSource::Perfect,
            convolution: Convolution::Circular,
            seed: 1,
            min_errors: 200,
            min_error_packets: 0,
            max_symbols: 10_000_000,
            ser_stop: None,
            batch_packets: 16,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(format!("{}: {m}", self.name)));
        self.lora_config()?;
        if self.snr_db.is_empty() {
            return bad("SNR grid is empty");
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("SNR grid has NaN or -inf");
        }
        if self.payload_symbols == 0 {
            return bad("payload must hold at least one symbol");
        }
        if self.detectors.is_empty() {
            return bad("no detectors");
        }
        if self.min_errors == 0 || self.max_symbols < self.min_errors {
            return bad("need 0 < min_errors <= max_symbols");
        }
        if self.batch_packets == 0 {
            return bad("batch_packets must be positive");
        }
        if !(0.0..100.0).contains(&self.drift_percent) {
            return bad("drift_percent must be in [0, 100)");
        }
        let needs_preamble = self.detectors.iter().any(|d| {
            matches!(d, DetectorKind::TdelOriginal | DetectorKind::TdelModified)
        }) || matches!(self.statistics, StatisticSource::Estimated { .. });
        if needs_preamble && self.preamble_symbols == 0 {
            return bad("TDEL and estimated statistics need preamble symbols");
        }
        if let StatisticSource::Estimated { packets } = self.statistics {
            if packets == 0 || packets * self.preamble_symbols < 2 {
                return bad("estimation needs at least two preamble observations");
            }
        }
        self.channel_profile()?;
        Ok(())
    }

    pub fn lora_config(&self) -> Result<LoRaConfig> {
        LoRaConfig::new(self.sf, self.bandwidth_hz)
    }

    pub fn path_table(&self) -> Result<PathTable> {
        match &self.profile_file {
            Some(p) => PathTable::from_file(p),
            None => PathTable::builtin(&self.profile),
        }
    }

    pub fn channel_profile(&self) -> Result<ChannelProfile> {
        profile_from_path_table(&self.path_table()?, self.bandwidth_hz, self.k0, self.doppler_hz)
    }

    pub fn packet_symbols(&self) -> usize {
        self.preamble_symbols + self.payload_symbols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_ids_roundtrip() {
        for d in DetectorKind::ALL {
            assert_eq!(d.id().parse::<DetectorKind>().unwrap(), d);
        }
        assert!(matches!("rake".parse::<DetectorKind>(), Err(Error::UnknownDetector(_))));
    }

    #[test]
    fn toml_roundtrip_and_defaults() {
        let sc = Scenario {
            name: "x".into(),
            statistics: StatisticSource::Estimated { packets: 50 },
            ser_stop: Some(1e-4),
            ..Default::default()
        };
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(back, sc);

        let minimal = Scenario::from_toml_str("name = \"m\"\nk0 = 2.0\nsnr_db = [0.0, 5.0]\n").unwrap();
        assert_eq!(minimal.payload_symbols, 100);
        assert_eq!(minimal.k0, 2.0);
        assert_eq!(minimal.channel_profile().unwrap().num_taps(), 2);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(Scenario::from_toml_str("detectors = [\"rake\"]\n").unwrap_err().to_string().contains("rake"));
        assert!(Scenario::from_toml_str("profile = \"epa\"\n").is_err());
        assert!(Scenario::from_toml_str("snr_db = []\n").is_err());
        assert!(Scenario::from_toml_str("payload_symbols = 0\n").is_err());
        assert!(Scenario::from_toml_str("min_errors = 10\nmax_symbols = 5\n").is_err());
        assert!(Scenario::from_toml_str("sf = 6\n").is_err());
        assert!(Scenario::from_toml_str("bogus = 1\n").is_err());
        assert!(Scenario::from_toml_str("preamble_symbols = 0\n").is_err());
    }

    #[test]
    fn statistics_tables() {
        let sc = Scenario::from_toml_str("[statistics]\nkind = \"estimated\"\npackets = 50\n").unwrap();
        assert_eq!(sc.statistics, StatisticSource::Estimated { packets: 50 });
        assert_eq!(sc.statistics.label(), "estimated-50");
    }
}
