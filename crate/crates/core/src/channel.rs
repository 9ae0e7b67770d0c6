//! Tapped-delay-line Rician multipath channel.
//!
//! Profiles are built from ITU-style path tables by binning each path to the
//! nearest sample delay at the signal bandwidth. Tap gains are held constant
//! over one symbol and evolve between symbols: the diffuse part of each tap
//! is a Gaussian-weighted sum of sinusoids with Jakes-distributed Doppler
//! shifts, and the line-of-sight part of tap 0 is a constant-amplitude
//! phasor rotating at `f_d·cos θ`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::LoRaSymbol;

/// Number of sinusoids per diffuse tap process.
pub const DEFAULT_SINUSOIDS: usize = 16;

const EVA_DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
const EVA_POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];

/// Delay/power table of discrete propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTable {
    delays_ns: Vec<f64>,
    relative_powers_db: Vec<f64>,
}

impl PathTable {
    pub fn new(delays_ns: Vec<f64>, relative_powers_db: Vec<f64>) -> Result<Self> {
        if delays_ns.is_empty() {
            return Err(Error::InvalidPathTable("table has no paths".into()));
        }
        if delays_ns.len() != relative_powers_db.len() {
            return Err(Error::InvalidPathTable(format!(
                "{} delays but {} powers",
                delays_ns.len(),
                relative_powers_db.len()
            )));
        }
        if delays_ns[0] != 0.0 {
            return Err(Error::InvalidPathTable("first delay must be 0".into()));
        }
        if delays_ns.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPathTable("delays must be strictly increasing".into()));
        }
        if delays_ns.iter().chain(&relative_powers_db).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPathTable("non-finite entry".into()));
        }
        Ok(Self {
            delays_ns,
            relative_powers_db,
        })
    }

    /// ITU Extended Vehicular A.
    pub fn eva() -> Self {
        Self {
            delays_ns: EVA_DELAYS_NS.to_vec(),
            relative_powers_db: EVA_POWERS_DB.to_vec(),
        }
    }

    /// Built-in tables by name. Only `eva` ships today.
    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "eva" => Ok(Self::eva()),
            _ => Err(Error::UnknownProfile(name.to_string())),
        }
    }

    /// Parse one `delay_ns power_db` pair per line. Whitespace or commas
    /// separate the columns; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut delays = Vec::new();
        let mut powers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected `delay_ns power_db`, got `{line}`",
                    lineno + 1
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            delays.push(parse(cols[0])?);
            powers.push(parse(cols[1])?);
        }
        Self::new(delays, powers)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn delays_ns(&self) -> &[f64] {
        &self.delays_ns
    }

    pub fn relative_powers_db(&self) -> &[f64] {
        &self.relative_powers_db
    }
}

/// Per-tap average powers and Rician shape factors plus the maximum Doppler.
///
/// Tap powers sum to one; only tap 0 may carry a line-of-sight component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    tap_powers: Vec<f64>,
    tap_shape_factors: Vec<f64>,
    doppler_hz: f64,
}

impl ChannelProfile {
    /// Build a profile from unnormalized tap powers; they are rescaled to
    /// unit total power. Tap 0 must be strictly positive, the others
    /// non-negative.
    pub fn new(tap_powers: Vec<f64>, k0: f64, doppler_hz: f64) -> Result<Self> {
        if tap_powers.is_empty() {
            return Err(Error::InvalidProfile("no taps".into()));
        }
        if !(tap_powers[0] > 0.0) || tap_powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidProfile(format!("bad tap powers {tap_powers:?}")));
        }
        if !(k0.is_finite() && k0 >= 0.0) {
            return Err(Error::InvalidProfile(format!("K0 must be >= 0, got {k0}")));
        }
        if !(doppler_hz.is_finite() && doppler_hz >= 0.0) {
            return Err(Error::InvalidProfile(format!("Doppler must be >= 0, got {doppler_hz}")));
        }
        let total: f64 = tap_powers.iter().sum();
        let tap_powers: Vec<f64> = tap_powers.iter().map(|p| p / total).collect();
        let mut tap_shape_factors = vec![0.0; tap_powers.len()];
        tap_shape_factors[0] = k0;
        Ok(Self {
            tap_powers,
            tap_shape_factors,
            doppler_hz,
        })
    }

    pub fn num_taps(&self) -> usize {
        self.tap_powers.len()
    }

    pub fn tap_powers(&self) -> &[f64] {
        &self.tap_powers
    }

    pub fn tap_shape_factors(&self) -> &[f64] {
        &self.tap_shape_factors
    }

    pub fn k0(&self) -> f64 {
        self.tap_shape_factors[0]
    }

    pub fn doppler_hz(&self) -> f64 {
        self.doppler_hz
    }

    pub fn with_doppler(mut self, doppler_hz: f64) -> Result<Self> {
        if !(doppler_hz.is_finite() && doppler_hz >= 0.0) {
            return Err(Error::InvalidProfile(format!("Doppler must be >= 0, got {doppler_hz}")));
        }
        self.doppler_hz = doppler_hz;
        Ok(self)
    }
}

/// Collapse a path table onto `L = ⌈max(τ)·B⌉` sample-spaced taps.
///
/// Each path goes to tap `⌊τB + 0.5⌋` (clamped to the last tap) and linear
/// powers are summed per tap. A table with a single zero-delay path gives
/// one tap.
pub fn profile_from_path_table(
    table: &PathTable,
    bandwidth_hz: f64,
    k0: f64,
    doppler_hz: f64,
) -> Result<ChannelProfile> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(Error::InvalidBandwidth(bandwidth_hz));
    }
    let max_delay_s = table.delays_ns.last().copied().unwrap_or(0.0) * 1e-9;
    // absorb representation error when τB lands on an integer
    let span = max_delay_s * bandwidth_hz;
    let num_taps = ((span - 1e-9).ceil() as usize).max(1);
    let mut powers = vec![0.0; num_taps];
    for (delay_ns, power_db) in table.delays_ns.iter().zip(&table.relative_powers_db) {
        let idx = ((delay_ns * 1e-9 * bandwidth_hz + 0.5).floor() as usize).min(num_taps - 1);
        powers[idx] += 10f64.powf(power_db / 10.0);
    }
    ChannelProfile::new(powers, k0, doppler_hz)
}

/// Tap gains for every symbol slot of one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_taps: usize,
    gains: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn from_taps(taps_per_symbol: Vec<Vec<Complex64>>) -> Result<Self> {
        let num_taps = taps_per_symbol.first().map_or(0, Vec::len);
        if num_taps == 0 || taps_per_symbol.iter().any(|t| t.len() != num_taps) {
            return Err(Error::InvalidProfile("ragged or empty tap matrix".into()));
        }
        Ok(Self {
            num_taps,
            gains: taps_per_symbol.into_iter().flatten().collect(),
        })
    }

    pub fn num_symbols(&self) -> usize {
        self.gains.len() / self.num_taps
    }

    pub fn num_taps(&self) -> usize {
        self.num_taps
    }

    /// Taps seen by symbol slot `symbol`.
    pub fn taps(&self, symbol: usize) -> &[Complex64] {
        &self.gains[symbol * self.num_taps..(symbol + 1) * self.num_taps]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Complex64]> {
        self.gains.chunks_exact(self.num_taps)
    }
}

/// Generates per-packet channel realizations for a fixed profile and packet length.
#[derive(Debug, Clone)]
pub struct FadingGenerator {
    profile: ChannelProfile,
    num_symbols: usize,
    symbol_duration_s: f64,
    sinusoids: usize,
    drift: f64,
}

impl FadingGenerator {
    pub fn new(profile: ChannelProfile, num_symbols: usize, symbol_duration_s: f64) -> Result<Self> {
        if num_symbols == 0 {
            return Err(Error::InvalidProfile("packet needs at least one symbol".into()));
        }
        if !(symbol_duration_s.is_finite() && symbol_duration_s > 0.0) {
            return Err(Error::InvalidProfile(format!("bad symbol duration {symbol_duration_s}")));
        }
        Ok(Self {
            profile,
            num_symbols,
            symbol_duration_s,
            sinusoids: DEFAULT_SINUSOIDS,
            drift: 0.0,
        })
    }

    pub fn with_sinusoids(mut self, n: usize) -> Self {
        self.sinusoids = n.max(1);
        self
    }

    /// Per packet, scale every tap power and `K₀` by an independent
    /// uniform factor in `[1 − fraction, 1 + fraction]`. Total power is not
    /// renormalized afterwards.
    pub fn with_drift(mut self, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidProfile(format!("drift fraction {fraction} not in [0, 1)")));
        }
        self.drift = fraction;
        Ok(self)
    }

    pub fn profile(&self) -> &ChannelProfile {
        &self.profile
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn realize_packet<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let taps = self.profile.num_taps();
        let n_sym = self.num_symbols;
        let mut gains = vec![Complex64::default(); n_sym * taps];
        let dt = self.symbol_duration_s;
        let fd = self.profile.doppler_hz;
        let n_sin = self.sinusoids;
        let drift_factor = |rng: &mut R| {
            if self.drift > 0.0 {
                rng.random_range(1.0 - self.drift..=1.0 + self.drift)
            } else {
                1.0
            }
        };
        let mut amps = vec![Complex64::default(); n_sin];
        let mut rots = vec![Complex64::default(); n_sin];
        for tap in 0..taps {
            let rho = self.profile.tap_powers[tap] * drift_factor(rng);
            let k = self.profile.tap_shape_factors[tap] * if tap == 0 { drift_factor(rng) } else { 1.0 };
            let diffuse_power = rho / (k + 1.0);
            // Gaussian-weighted sinusoids: exactly Gaussian marginals,
            // J₀(2π f_d τ) autocorrelation on average over packets.
            let a_scale = (diffuse_power / (2.0 * n_sin as f64)).sqrt();
            for (a, r) in amps.iter_mut().zip(rots.iter_mut()) {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *a = Complex64::new(re * a_scale, im * a_scale);
                let alpha = rng.random_range(0.0..2.0 * PI);
                *r = Complex64::from_polar(1.0, 2.0 * PI * fd * alpha.cos() * dt);
            }
            let los_amp = (k * rho / (k + 1.0)).sqrt();
            let theta = rng.random_range(0.0..2.0 * PI);
            let phi0 = rng.random_range(0.0..2.0 * PI);
            let los_step = 2.0 * PI * fd * theta.cos() * dt;
            for s in 0..n_sym {
                let diffuse: Complex64 = amps.iter().sum();
                let los = Complex64::from_polar(los_amp, phi0 + los_step * s as f64);
                gains[s * taps + tap] = diffuse + los;
                for (a, r) in amps.iter_mut().zip(&rots) {
                    *a *= r;
                }
            }
        }
        ChannelRealization { num_taps: taps, gains }
    }
}

/// One-shot realization; builds a [`FadingGenerator`] each call.
pub fn realize_packet<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    num_symbols: usize,
    symbol_duration_s: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    Ok(FadingGenerator::new(profile.clone(), num_symbols, symbol_duration_s)?.realize_packet(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convolution {
    /// `h ⊛ s`, length `M`; inter-symbol interference ignored.
    #[default]
    Circular,
    /// `h ∗ s`, length `M + L − 1` for an isolated symbol.
    Linear,
}

/// Pass one symbol through `taps` and add complex AWGN of variance `sigma2`.
pub fn apply_channel<R: Rng + ?Sized>(
    symbol: &LoRaSymbol,
    taps: &[Complex64],
    sigma2: f64,
    rng: &mut R,
    mode: Convolution,
) -> Result<Vec<Complex64>> {
    let m = symbol.samples.len();
    if taps.len() > m {
        return Err(Error::TooManyTaps { taps: taps.len(), m });
    }
    if taps.is_empty() {
        return Err(Error::InvalidProfile("no taps".into()));
    }
    let len = match mode {
        Convolution::Circular => m,
        Convolution::Linear => m + taps.len() - 1,
    };
    let mut out = vec![Complex64::default(); len];
    match mode {
        Convolution::Circular => convolve_circular(&symbol.samples, taps, &mut out),
        Convolution::Linear => {
            for (l, h) in taps.iter().enumerate() {
                for (n, s) in symbol.samples.iter().enumerate() {
                    out[n + l] += h * s;
                }
            }
        }
    }
    add_awgn(&mut out, sigma2, rng);
    Ok(out)
}

/// `out[n] = Σ_ℓ h_ℓ·x[(n − ℓ) mod M]`
pub fn convolve_circular(x: &[Complex64], taps: &[Complex64], out: &mut [Complex64]) {
    let m = x.len();
    debug_assert_eq!(out.len(), m);
    out.fill(Complex64::default());
    for (l, h) in taps.iter().enumerate() {
        let l = l % m;
        for n in 0..m {
            out[n] += h * x[(n + m - l) % m];
        }
    }
}

/// Receive window of one symbol inside a packet stream: the linear
/// convolution over the concatenated chirps, so the first `L − 1` samples
/// carry the tail of `previous` (zeros if this is the first symbol).
pub fn convolve_stream(
    current: &[Complex64],
    previous: Option<&[Complex64]>,
    taps: &[Complex64],
    out: &mut [Complex64],
) {
    let m = current.len();
    out.fill(Complex64::default());
    for (l, h) in taps.iter().enumerate() {
        for n in 0..m {
            let x = if n >= l {
                current[n - l]
            } else {
                match previous {
                    Some(p) => p[m + n - l],
                    None => continue,
                }
            };
            out[n] += h * x;
        }
    }
}

/// Add circular complex Gaussian noise with total variance `sigma2` per sample.
pub fn add_awgn<R: Rng + ?Sized>(samples: &mut [Complex64], sigma2: f64, rng: &mut R) {
    let s = (sigma2 / 2.0).sqrt();
    for v in samples {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Complex64::new(re * s, im * s);
    }
}

/// Per-sample noise variance for an SNR in dB, with unit-power chirps and
/// unit total channel power. `+∞` dB gives zero noise.
pub fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}
