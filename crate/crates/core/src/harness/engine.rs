use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::rng::StreamKey;
use super::scenario::{DetectorKind, Scenario, StatisticSource};
use crate::channel::{
    add_awgn, convolve_circular, convolve_stream, noise_variance_from_snr_db, ChannelProfile, ChannelRealization,
    Convolution, FadingGenerator,
};
use crate::detect::{
    build_tdel_reference_with_taps, detect_coherent_ml, detect_conventional, detect_tdel, ChannelStatistics,
    NcMlDetector, TdelVariant,
};
use crate::error::{Error, Result};
use crate::estimate::{estimate_statistics, EstimatedStatistics, StatisticAccumulator};
use crate::modem::{DechirpedSpectrum, Modem};

/// Noise variance handed to the detectors when the SNR is infinite.
pub const NOISE_FLOOR: f64 = 1e-12;

const PACKET_DOMAIN: &str = "packets";
const ESTIMATION_DOMAIN: &str = "estimation";

/// One row of a sweep: symbol errors of one detector at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SerRecord {
    pub scenario: String,
    pub fingerprint: String,
    pub sf: u32,
    pub k0: f64,
    pub doppler_hz: f64,
    pub statistics: String,
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub symbols: u64,
    pub errors: u64,
    pub ser: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Print one line per SNR point to stderr.
    pub progress: bool,
}

/// Identity of the simulated channel. Detectors, the statistics source,
/// the SNR grid, the convolution mode and the Doppler spread are
/// deliberately left out so that runs differing only in those see the same
/// draws. Zero Doppler then freezes each packet at the taps its
/// time-variant counterpart starts from.
pub fn channel_material(sc: &Scenario, profile: &ChannelProfile) -> String {
    format!(
        "sf={};bw={:?};taps={:?};k0={:?};drift={:?};preamble={};payload={};seed={}",
        sc.sf,
        sc.bandwidth_hz,
        profile.tap_powers(),
        profile.k0(),
        sc.drift_percent,
        sc.preamble_symbols,
        sc.payload_symbols,
        sc.seed
    )
}

/// Short hex fingerprint of [`channel_material`].
pub fn fingerprint(sc: &Scenario) -> Result<String> {
    let profile = sc.channel_profile()?;
    Ok(StreamKey::derive(PACKET_DOMAIN, &channel_material(sc, &profile)).short_hex())
}

/// Packet simulator for one scenario.
pub struct PacketSimulator {
    modem: Modem,
    fading: FadingGenerator,
    preamble: usize,
    payload: usize,
    convolution: Convolution,
}

/// Spectra and channel of one simulated packet.
pub struct ReceivedPacket {
    pub symbols: Vec<usize>,
    pub spectra: Vec<DechirpedSpectrum>,
    pub channel: ChannelRealization,
}

impl ReceivedPacket {
    pub fn preamble(&self, n: usize) -> &[DechirpedSpectrum] {
        &self.spectra[..n]
    }
}

impl PacketSimulator {
    pub fn new(sc: &Scenario) -> Result<Self> {
        let cfg = sc.lora_config()?;
        let profile = sc.channel_profile()?;
        if profile.num_taps() > cfg.m() {
            return Err(Error::TooManyTaps {
                taps: profile.num_taps(),
                m: cfg.m(),
            });
        }
        let mut fading = FadingGenerator::new(profile, sc.packet_symbols(), cfg.symbol_duration_s())?;
        if sc.drift_percent > 0.0 {
            fading = fading.with_drift(sc.drift_percent / 100.0)?;
        }
        Ok(Self {
            modem: Modem::new(cfg),
            fading,
            preamble: sc.preamble_symbols,
            payload: sc.payload_symbols,
            convolution: sc.convolution,
        })
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    pub fn profile(&self) -> &ChannelProfile {
        self.fading.profile()
    }

    /// Channel, payload and noise are drawn in a fixed order, so the same
    /// stream at two SNRs differs only in the noise scale.
    pub fn packet<R: Rng>(&self, rng: &mut R, sigma2: f64, with_payload: bool) -> Result<ReceivedPacket> {
        let channel = self.fading.realize_packet(rng);
        let size = self.modem.m();
        let mut symbols = vec![0usize; self.preamble];
        if with_payload {
            symbols.extend((0..self.payload).map(|_| rng.random_range(0..size)));
        }
        let mut prev = vec![Complex64::default(); size];
        let mut cur = vec![Complex64::default(); size];
        let mut rx = vec![Complex64::default(); size];
        let mut spectra = Vec::with_capacity(symbols.len());
        for (i, &m) in symbols.iter().enumerate() {
            self.modem.modulate_into(m, &mut cur)?;
            let taps = channel.taps(i);
            match self.convolution {
                Convolution::Circular => convolve_circular(&cur, taps, &mut rx),
                Convolution::Linear => convolve_stream(&cur, (i > 0).then_some(&prev[..]), taps, &mut rx),
            }
            add_awgn(&mut rx, sigma2, rng);
            spectra.push(self.modem.demodulate(&rx)?);
            std::mem::swap(&mut prev, &mut cur);
        }
        Ok(ReceivedPacket {
            symbols,
            spectra,
            channel,
        })
    }
}

fn effective_noise(sigma2: f64) -> f64 {
    sigma2.max(NOISE_FLOOR)
}

/// Estimate statistics from the preambles of `packets` packets drawn from
/// the estimation stream at noise variance `sigma2`.
pub fn estimate_from_packets(
    sim: &PacketSimulator,
    key: &StreamKey,
    packets: usize,
    sigma2: f64,
) -> Result<EstimatedStatistics> {
    let mut acc = StatisticAccumulator::new(sim.modem.m());
    for p in 0..packets {
        let pkt = sim.packet(&mut key.rng(p as u64), sigma2, false)?;
        for s in &pkt.spectra {
            acc.accumulate(s)?;
        }
    }
    let mut est = estimate_statistics(&acc, sim.profile().num_taps())?;
    if est.stats.noise_var() < NOISE_FLOOR {
        est.stats = est.stats.with_noise_var(NOISE_FLOOR)?;
    }
    Ok(est)
}

fn statistics_for_point(
    sc: &Scenario,
    sim: &PacketSimulator,
    est_key: &StreamKey,
    sigma2: f64,
) -> Result<ChannelStatistics> {
    let profile = sim.profile();
    let m = sim.modem.m();
    match &sc.statistics {
        StatisticSource::Perfect => {
            ChannelStatistics::new(profile.tap_powers().to_vec(), profile.k0(), effective_noise(sigma2), m)
        }
        StatisticSource::Estimated { packets } => Ok(estimate_from_packets(sim, est_key, *packets, sigma2)?.stats),
        StatisticSource::File { path } => {
            let stats = ChannelStatistics::load(path)?;
            if stats.alphabet() != m {
                return Err(Error::InvalidStatistics(format!(
                    "file alphabet {} does not match M = {m}",
                    stats.alphabet()
                )));
            }
            stats.with_noise_var(effective_noise(sigma2))
        }
    }
}

struct PointRunner<'a> {
    sim: &'a PacketSimulator,
    key: &'a StreamKey,
    active: &'a [DetectorKind],
    stats: &'a ChannelStatistics,
    sigma2: f64,
}

impl PointRunner<'_> {
    fn errors_in_packet(&self, index: u64) -> Result<Vec<u64>> {
        let sim = self.sim;
        let pkt = sim.packet(&mut self.key.rng(index), self.sigma2, true)?;
        let preamble = pkt.preamble(sim.preamble);
        let num_taps = sim.profile().num_taps();
        let tdel = |variant| -> Result<_> {
            match build_tdel_reference_with_taps(preamble, variant, num_taps) {
                Ok(r) => Ok(Some(r)),
                Err(Error::ZeroReference) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let tdel_orig = if self.active.contains(&DetectorKind::TdelOriginal) {
            tdel(TdelVariant::Original)?
        } else {
            None
        };
        let tdel_mod = if self.active.contains(&DetectorKind::TdelModified) {
            tdel(TdelVariant::Modified)?
        } else {
            None
        };
        let mut ncml = NcMlDetector::new(self.stats);
        let stale = pkt.channel.taps(0);
        let mut errors = vec![0u64; self.active.len()];
        for i in sim.preamble..pkt.symbols.len() {
            let spectrum = &pkt.spectra[i];
            let truth = pkt.symbols[i];
            for (e, det) in errors.iter_mut().zip(self.active) {
                let decided = match det {
                    DetectorKind::Conventional => Some(detect_conventional(spectrum).symbol),
                    DetectorKind::Coherent => Some(detect_coherent_ml(spectrum, stale).symbol),
                    DetectorKind::CoherentGenie => Some(detect_coherent_ml(spectrum, pkt.channel.taps(i)).symbol),
                    DetectorKind::NcMl => Some(ncml.detect(spectrum).symbol),
                    DetectorKind::TdelOriginal => tdel_orig.as_ref().map(|r| detect_tdel(spectrum, r).symbol),
                    DetectorKind::TdelModified => tdel_mod.as_ref().map(|r| detect_tdel(spectrum, r).symbol),
                };
                if decided != Some(truth) {
                    *e += 1;
                }
            }
        }
        Ok(errors)
    }
}

/// Run a scenario with default options.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<SerRecord>> {
    run_scenario_with(sc, &RunOptions::default())
}

/// Sweep the SNR grid. Packets are simulated in fixed-size batches and the
/// stopping rule is only checked between batches, so the counts do not
/// depend on the number of workers.
pub fn run_scenario_with(sc: &Scenario, opts: &RunOptions) -> Result<Vec<SerRecord>> {
    sc.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let sim = PacketSimulator::new(sc)?;
    let material = channel_material(sc, sim.profile());
    let key = StreamKey::derive(PACKET_DOMAIN, &material);
    let est_key = StreamKey::derive(ESTIMATION_DOMAIN, &material);
    let fp = key.short_hex();
    let label = sc.statistics.label();

    let mut active: Vec<DetectorKind> = Vec::new();
    for d in &sc.detectors {
        if !active.contains(d) {
            active.push(*d);
        }
    }
    let mut records = Vec::new();
    for &snr_db in &sc.snr_db {
        if active.is_empty() {
            break;
        }
        let started = Instant::now();
        let sigma2 = noise_variance_from_snr_db(snr_db);
        let stats = statistics_for_point(sc, &sim, &est_key, sigma2)?;
        let runner = PointRunner {
            sim: &sim,
            key: &key,
            active: &active,
            stats: &stats,
            sigma2,
        };
        let mut errors = vec![0u64; active.len()];
        let mut error_packets = vec![0u64; active.len()];
        let mut packets = 0u64;
        let payload = sc.payload_symbols as u64;
        loop {
            let remaining = (sc.max_symbols - packets * payload).div_ceil(payload);
            let batch = remaining.min(sc.batch_packets as u64);
            if batch == 0 {
                break;
            }
            let counts: Vec<Vec<u64>> = pool.install(|| {
                (packets..packets + batch)
                    .into_par_iter()
                    .map(|p| runner.errors_in_packet(p))
                    .collect::<Result<_>>()
            })?;
            for c in counts {
                for ((t, hit), e) in errors.iter_mut().zip(error_packets.iter_mut()).zip(c) {
                    *t += e;
                    *hit += u64::from(e > 0);
                }
            }
            packets += batch;
            let enough = errors
                .iter()
                .zip(&error_packets)
                .all(|(&e, &p)| e >= sc.min_errors && p >= sc.min_error_packets);
            if enough || packets * payload >= sc.max_symbols {
                break;
            }
        }
        let symbols = packets * payload;
        let elapsed = started.elapsed().as_secs_f64();
        let mut keep = Vec::with_capacity(active.len());
        for (det, e) in active.iter().zip(&errors) {
            let ser = *e as f64 / symbols as f64;
            records.push(SerRecord {
                scenario: sc.name.clone(),
                fingerprint: fp.clone(),
                sf: sc.sf,
                k0: sc.k0,
                doppler_hz: sc.doppler_hz,
                statistics: label.clone(),
                detector: *det,
                snr_db,
                symbols,
                errors: *e,
                ser,
                wall_time_s: elapsed,
            });
            if opts.progress {
                eprintln!(
                    "{} {:>14} snr={:>6.2} dB  ser={:.3e}  ({} / {})",
                    sc.name, det, snr_db, ser, e, symbols
                );
            }
            let stop = sc.ser_stop.is_some_and(|t| ser < t);
            if !stop {
                keep.push(*det);
            }
        }
        active = keep;
    }
    Ok(records)
}
