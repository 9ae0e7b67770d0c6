//! Chirp generation and the dechirp/DFT front end.
//!
//! Every detector in this crate works on the phase-corrected spectrum
//! `Ȳ[k] = Ỹ[k]·exp(-jψ_k)`, where `Ỹ` is the unitary DFT of the received
//! symbol multiplied by the conjugate basic upchirp. With the `1/√M` DFT
//! scaling a chirp received through a single gain `h` lands at its own bin
//! with amplitude `√M·h`, and white noise keeps its per-sample variance.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SF: u32 = 7;
pub const MAX_SF: u32 = 12;

/// Spreading factor and bandwidth of a LoRa link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct LoRaConfig {
    sf: u32,
    m_size: usize,
    bandwidth_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    sf: u32,
    bandwidth_hz: f64,
}

impl TryFrom<RawConfig> for LoRaConfig {
    type Error = Error;
    fn try_from(raw: RawConfig) -> Result<Self> {
        LoRaConfig::new(raw.sf, raw.bandwidth_hz)
    }
}

impl From<LoRaConfig> for RawConfig {
    fn from(c: LoRaConfig) -> Self {
        RawConfig {
            sf: c.sf,
            bandwidth_hz: c.bandwidth_hz,
        }
    }
}

impl LoRaConfig {
    pub fn new(sf: u32, bandwidth_hz: f64) -> Result<Self> {
        if !(MIN_SF..=MAX_SF).contains(&sf) {
            return Err(Error::InvalidSpreadingFactor(sf));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::InvalidBandwidth(bandwidth_hz));
        }
        Ok(Self {
            sf,
            m_size: 1 << sf,
            bandwidth_hz,
        })
    }

    pub fn sf(&self) -> u32 {
        self.sf
    }

    /// Alphabet size `M = 2^SF`.
    pub fn m(&self) -> usize {
        self.m_size
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Duration of one critically sampled symbol, `M / B`.
    pub fn symbol_duration_s(&self) -> f64 {
        self.m_size as f64 / self.bandwidth_hz
    }
}

impl Default for LoRaConfig {
    fn default() -> Self {
        Self {
            sf: 7,
            m_size: 128,
            bandwidth_hz: 500e3,
        }
    }
}

impl fmt::Display for LoRaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{} @ {} kHz", self.sf, self.bandwidth_hz / 1e3)
    }
}

/// Sample `n` of the basic upchirp for an alphabet of `m_size` chirps.
///
/// The phase `2π(n²/(2M) − n/2)` is reduced modulo 2π with integer
/// arithmetic before the exponential is taken, so large `n` loses no
/// precision. `m_size` must be even for the chirp to be `M`-periodic.
pub fn upchirp_sample(m_size: usize, n: usize) -> Complex64 {
    let two_m = 2 * m_size as u64;
    let n = n as u64;
    let quad = ((n % two_m) * (n % two_m)) % two_m;
    let frac = quad as f64 / two_m as f64 - (n % 2) as f64 / 2.0;
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

pub fn basic_upchirp(config: &LoRaConfig) -> Vec<Complex64> {
    let m = config.m();
    (0..m).map(|n| upchirp_sample(m, n)).collect()
}

/// One transmitted chirp: the basic upchirp cyclically advanced by `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoRaSymbol {
    pub index: usize,
    pub samples: Vec<Complex64>,
}

pub fn modulate(config: &LoRaConfig, m: usize) -> Result<LoRaSymbol> {
    let size = config.m();
    if m >= size {
        return Err(Error::SymbolOutOfRange { index: m, m: size });
    }
    let base = basic_upchirp(config);
    let samples = (0..size).map(|n| base[(n + m) % size]).collect();
    Ok(LoRaSymbol { index: m, samples })
}

/// The `M` phase-corrected frequency bins of one dechirped symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct DechirpedSpectrum {
    bins: Vec<Complex64>,
}

impl DechirpedSpectrum {
    pub fn from_bins(bins: Vec<Complex64>) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn into_bins(self) -> Vec<Complex64> {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `|Ȳ[k]|²`
    pub fn power(&self, k: usize) -> f64 {
        self.bins[k].norm_sqr()
    }
}

/// Dechirp `received`, apply the unitary DFT and strip the bin phase `ψ_k`.
///
/// Convenience wrapper that plans a fresh FFT; use [`Modem`] when
/// demodulating many symbols.
pub fn dechirp_and_transform(config: &LoRaConfig, received: &[Complex64]) -> Result<DechirpedSpectrum> {
    Modem::new(*config).demodulate(received)
}

/// Reusable modulator/demodulator with precomputed chirp tables and FFT plan.
#[derive(Clone)]
pub struct Modem {
    config: LoRaConfig,
    upchirp: Vec<Complex64>,
    // conj(s_0[n]); also equals exp(-jψ_k) at k = n
    upchirp_conj: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for Modem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modem").field("config", &self.config).finish()
    }
}

impl Modem {
    pub fn new(config: LoRaConfig) -> Self {
        let upchirp = basic_upchirp(&config);
        let upchirp_conj = upchirp.iter().map(|c| c.conj()).collect();
        let fft = FftPlanner::new().plan_fft_forward(config.m());
        Self {
            config,
            upchirp,
            upchirp_conj,
            fft,
            scale: 1.0 / (config.m() as f64).sqrt(),
        }
    }

    pub fn config(&self) -> &LoRaConfig {
        &self.config
    }

    pub fn m(&self) -> usize {
        self.config.m()
    }

    pub fn upchirp(&self) -> &[Complex64] {
        &self.upchirp
    }

    pub fn modulate(&self, m: usize) -> Result<LoRaSymbol> {
        let mut samples = vec![Complex64::default(); self.m()];
        self.modulate_into(m, &mut samples)?;
        Ok(LoRaSymbol { index: m, samples })
    }

    /// Write the samples of chirp `m` into `out` (length `M`).
    pub fn modulate_into(&self, m: usize, out: &mut [Complex64]) -> Result<()> {
        let size = self.m();
        if m >= size {
            return Err(Error::SymbolOutOfRange { index: m, m: size });
        }
        check_len(size, out.len())?;
        let (head, tail) = self.upchirp.split_at(m);
        out[..size - m].copy_from_slice(tail);
        out[size - m..].copy_from_slice(head);
        Ok(())
    }

    /// Dechirped unitary DFT `Ỹ` before the per-bin phase is removed.
    pub fn dechirped_dft(&self, received: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.m(), received.len())?;
        let mut buf: Vec<Complex64> = received
            .iter()
            .zip(&self.upchirp_conj)
            .map(|(r, c)| r * c)
            .collect();
        self.fft.process(&mut buf);
        for v in &mut buf {
            *v *= self.scale;
        }
        Ok(buf)
    }

    pub fn demodulate(&self, received: &[Complex64]) -> Result<DechirpedSpectrum> {
        let mut bins = vec![Complex64::default(); self.m()];
        self.demodulate_into(received, &mut bins)?;
        Ok(DechirpedSpectrum { bins })
    }

    /// Allocation-free variant of [`Modem::demodulate`]; `out` must hold `M` bins.
    pub fn demodulate_into(&self, received: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        check_len(self.m(), received.len())?;
        check_len(self.m(), out.len())?;
        for ((o, r), c) in out.iter_mut().zip(received).zip(&self.upchirp_conj) {
            *o = r * c;
        }
        self.fft.process(out);
        for (o, c) in out.iter_mut().zip(&self.upchirp_conj) {
            *o *= c * self.scale;
        }
        Ok(())
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}
