use std::fmt::Write as _;
use std::hint::black_box;
use std::ops::RangeInclusive;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine::PacketSimulator;
use super::scenario::{DetectorKind, Scenario};
use crate::channel::{add_awgn, convolve_circular, noise_variance_from_snr_db};
use crate::detect::{
    build_tdel_reference_with_taps, detect_coherent_ml, detect_conventional, detect_tdel, ChannelStatistics,
    NcMlDetector, TdelVariant,
};
use crate::error::{Error, Result};
use crate::modem::{MAX_SF, MIN_SF};

/// Detectors timed by [`benchmark_detectors`].
pub const BENCH_DETECTORS: [DetectorKind; 5] = [
    DetectorKind::Conventional,
    DetectorKind::Coherent,
    DetectorKind::NcMl,
    DetectorKind::TdelOriginal,
    DetectorKind::TdelModified,
];

const BENCH_SNR_DB: f64 = 10.0;
const REPETITIONS: usize = 15;
/// Distinct received windows per SF; the timed loop cycles through them so
/// the measurement stays cache resident instead of streaming from memory.
const WINDOW_POOL: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sf: u32,
    pub detector: DetectorKind,
    /// Dechirp, FFT and decision, per symbol.
    pub ns_per_symbol: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn time(&self, sf: u32, det: DetectorKind) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.sf == sf && r.detector == det)
            .map(|r| r.ns_per_symbol)
    }

    fn sfs(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.rows.iter().map(|r| r.sf).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `time(SF + 1) / time(SF)` for each consecutive pair.
    pub fn growth_ratios(&self, det: DetectorKind) -> Vec<(u32, f64)> {
        let sfs = self.sfs();
        sfs.windows(2)
            .filter(|w| w[1] == w[0] + 1)
            .filter_map(|w| Some((w[0], self.time(w[1], det)? / self.time(w[0], det)?)))
            .collect()
    }

    /// Least-squares slope of `log time` against `log M`.
    pub fn fitted_exponent(&self, det: DetectorKind) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .sfs()
            .into_iter()
            .filter_map(|sf| Some((sf as f64 * 2f64.ln(), self.time(sf, det)?.ln())))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn to_text(&self) -> String {
        let sfs = self.sfs();
        let mut s = String::new();
        let _ = write!(s, "{:>4} {:>6}", "sf", "M");
        for d in BENCH_DETECTORS {
            let _ = write!(s, " {:>14}", d.id());
        }
        s.push_str("   (ns per symbol)\n");
        for &sf in &sfs {
            let _ = write!(s, "{sf:>4} {:>6}", 1usize << sf);
            for d in BENCH_DETECTORS {
                match self.time(sf, d) {
                    Some(t) => {
                        let _ = write!(s, " {t:>14.0}");
                    }
                    None => {
                        let _ = write!(s, " {:>14}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s.push('\n');
        for d in BENCH_DETECTORS {
            let ratios: Vec<String> = self.growth_ratios(d).iter().map(|(_, r)| format!("{r:.2}")).collect();
            let exp = self.fitted_exponent(d).map_or("-".into(), |e| format!("{e:.2}"));
            let _ = writeln!(s, "{:>14}: growth per SF [{}], exponent {exp}", d.id(), ratios.join(", "));
        }
        s
    }
}

/// Time per-symbol detection for every SF in `sf_range`, averaging over
/// `trials` received symbols and keeping the fastest of a few repetitions.
/// Channel simulation happens before the clock starts; at most
/// [`WINDOW_POOL`] distinct windows are generated and reused in turn.
pub fn benchmark_detectors(sf_range: RangeInclusive<u32>, trials: usize) -> Result<BenchTable> {
    if *sf_range.start() < MIN_SF || *sf_range.end() > MAX_SF || sf_range.is_empty() {
        return Err(Error::InvalidSpreadingFactor(*sf_range.end()));
    }
    let trials = trials.max(1);
    let mut table = BenchTable::default();
    for sf in sf_range {
        let sc = Scenario {
            sf,
            payload_symbols: trials.min(WINDOW_POOL),
            ..Default::default()
        };
        let sim = PacketSimulator::new(&sc)?;
        let sigma2 = noise_variance_from_snr_db(BENCH_SNR_DB);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(sf));
        let pkt = sim.packet(&mut rng, sigma2, true)?;
        let modem = sim.modem();
        let m = modem.m();
        let profile = sim.profile();
        let stats = ChannelStatistics::new(profile.tap_powers().to_vec(), profile.k0(), sigma2, m)?;
        let preamble = pkt.preamble(sc.preamble_symbols);
        let tdel_orig = build_tdel_reference_with_taps(preamble, TdelVariant::Original, profile.num_taps())?;
        let tdel_mod = build_tdel_reference_with_taps(preamble, TdelVariant::Modified, profile.num_taps())?;
        let taps = pkt.channel.taps(0).to_vec();
        let windows: Vec<Vec<Complex64>> = pkt.symbols[sc.preamble_symbols..]
            .iter()
            .map(|&s| {
                let tx = modem.modulate(s).expect("symbol in range");
                let mut rx = vec![Complex64::default(); m];
                convolve_circular(&tx.samples, &taps, &mut rx);
                add_awgn(&mut rx, sigma2, &mut rng);
                rx
            })
            .collect();
        let mut ncml = NcMlDetector::new(&stats);
        for det in BENCH_DETECTORS {
            let mut best = f64::INFINITY;
            for _ in 0..REPETITIONS {
                let start = Instant::now();
                for w in windows.iter().cycle().take(trials) {
                    let spectrum = modem.demodulate(black_box(w))?;
                    let d = match det {
                        DetectorKind::Conventional => detect_conventional(&spectrum),
                        DetectorKind::Coherent | DetectorKind::CoherentGenie => detect_coherent_ml(&spectrum, &taps),
                        DetectorKind::NcMl => ncml.detect(&spectrum),
                        DetectorKind::TdelOriginal => detect_tdel(&spectrum, &tdel_orig),
                        DetectorKind::TdelModified => detect_tdel(&spectrum, &tdel_mod),
                    };
                    black_box(d);
                }
                best = best.min(start.elapsed().as_nanos() as f64 / trials as f64);
            }
            table.rows.push(BenchRow {
                sf,
                detector: det,
                ns_per_symbol: best,
            });
        }
    }
    Ok(table)
}
