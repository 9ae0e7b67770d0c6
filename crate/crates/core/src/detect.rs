//! Symbol detectors operating on a [`DechirpedSpectrum`].
//!
//! Given that chirp `m` was sent through taps `h_ℓ`, bin `(m − ℓ) mod M`
//! carries `√M·h_ℓ` plus noise of variance `σ²` and every other bin carries
//! noise only. The detectors differ in what they know about `h`:
//!
//! * conventional: nothing, picks the strongest bin;
//! * coherent ML: the instantaneous taps, combines the support bins like a RAKE;
//! * noncoherent ML: only `ρ_ℓ`, `K₀` and `σ²`;
//! * TDEL: a preamble-derived spectral template correlated cyclically.
//!
//! All argmax rules break ties toward the lowest symbol index.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bessel::ln_i0;
use crate::error::{Error, Result};
use crate::modem::DechirpedSpectrum;

/// Statistics the noncoherent detector needs: tap powers, first-tap shape
/// factor and per-bin noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStatistics {
    tap_powers: Vec<f64>,
    k0: f64,
    noise_var: f64,
    alphabet: usize,
}

impl ChannelStatistics {
    /// `tap_powers[0]` and `noise_var` must be positive; later taps may be zero.
    pub fn new(tap_powers: Vec<f64>, k0: f64, noise_var: f64, alphabet: usize) -> Result<Self> {
        let s = Self {
            tap_powers,
            k0,
            noise_var,
            alphabet,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStatistics(msg));
        if self.tap_powers.is_empty() {
            return bad("no taps".into());
        }
        if !(self.tap_powers[0] > 0.0 && self.tap_powers[0].is_finite()) {
            return bad(format!("rho_0 must be positive, got {}", self.tap_powers[0]));
        }
        if self.tap_powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad(format!("tap powers must be non-negative: {:?}", self.tap_powers));
        }
        if !(self.k0.is_finite() && self.k0 >= 0.0) {
            return bad(format!("K0 must be >= 0, got {}", self.k0));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return bad(format!("noise variance must be positive, got {}", self.noise_var));
        }
        if self.alphabet < 2 || self.tap_powers.len() > self.alphabet {
            return bad(format!(
                "alphabet {} incompatible with {} taps",
                self.alphabet,
                self.tap_powers.len()
            ));
        }
        Ok(())
    }

    pub fn tap_powers(&self) -> &[f64] {
        &self.tap_powers
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn num_taps(&self) -> usize {
        self.tap_powers.len()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Shape factor of `|Ȳ[m]|`: `K̃ = K₀Mρ₀ / (Mρ₀ + (K₀+1)σ²)`.
    pub fn derived_shape(&self) -> f64 {
        let mr0 = self.alphabet as f64 * self.tap_powers[0];
        self.k0 * mr0 / (mr0 + (self.k0 + 1.0) * self.noise_var)
    }

    /// Same statistics with a different noise variance.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        Self::new(self.tap_powers.clone(), self.k0, noise_var, self.alphabet)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("statistics serialize")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let stats: Self = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionDecision {
    pub symbol: usize,
    pub score: f64,
}

fn argmax(scores: impl Iterator<Item = f64>) -> DetectionDecision {
    let mut best = DetectionDecision {
        symbol: 0,
        score: f64::NEG_INFINITY,
    };
    for (m, s) in scores.enumerate() {
        if s > best.score {
            best = DetectionDecision { symbol: m, score: s };
        }
    }
    best
}

#[inline]
fn wrap(m: usize, l: usize, size: usize) -> usize {
    (m + size - l % size) % size
}

/// Strongest bin.
pub fn detect_conventional(spectrum: &DechirpedSpectrum) -> DetectionDecision {
    argmax(spectrum.bins().iter().map(|v| v.norm_sqr()))
}

/// `√M·Σ_ℓ Re{Ȳ[(m−ℓ) mod M]·h_ℓ*}`.
///
/// This is the coherent log-likelihood of symbol `m` up to an affine map
/// that does not depend on `m`: it equals `σ²/2·(LLH(m) − C + M·Σ|h_ℓ|²/σ²)`
/// with `C` the bin-independent Gaussian normalization.
pub fn coherent_log_likelihood(spectrum: &DechirpedSpectrum, taps: &[Complex64], m: usize) -> f64 {
    let size = spectrum.len();
    (size as f64).sqrt() * coherent_metric(spectrum.bins(), taps, m)
}

fn coherent_metric(bins: &[Complex64], taps: &[Complex64], m: usize) -> f64 {
    let size = bins.len();
    taps.iter()
        .enumerate()
        .map(|(l, h)| (bins[wrap(m, l, size)] * h.conj()).re)
        .sum()
}

/// Coherent ML / RAKE decision with known taps. The score is
/// `Σ_ℓ Re{Ȳ[(m̂−ℓ) mod M]·h_ℓ*}`.
pub fn detect_coherent_ml(spectrum: &DechirpedSpectrum, taps: &[Complex64]) -> DetectionDecision {
    let bins = spectrum.bins();
    argmax((0..bins.len()).map(|m| coherent_metric(bins, taps, m)))
}

/// Precomputed weights of the noncoherent metric for one set of statistics.
#[derive(Debug, Clone)]
pub struct NcMlWeights {
    // Bessel argument scale 2√(K̃(K̃+1)/(Mρ₀+σ²)); zero when K₀ = 0
    bessel_scale: f64,
    // quadratic weights per tap
    quad: Vec<f64>,
}

impl NcMlWeights {
    pub fn new(stats: &ChannelStatistics) -> Self {
        let m = stats.alphabet as f64;
        let s2 = stats.noise_var;
        let kt = stats.derived_shape();
        let r0 = stats.tap_powers[0];
        let bessel_scale = 2.0 * (kt * (kt + 1.0) / (m * r0 + s2)).sqrt();
        let mut quad = Vec::with_capacity(stats.num_taps());
        quad.push(m * r0 / (s2 * (m * r0 + (stats.k0 + 1.0) * s2)));
        for &r in &stats.tap_powers[1..] {
            quad.push(m * r / (s2 * (m * r + s2)));
        }
        Self { bessel_scale, quad }
    }

    fn quadratic(&self, power: &[f64], m: usize) -> f64 {
        let size = power.len();
        self.quad
            .iter()
            .enumerate()
            .map(|(l, w)| w * power[wrap(m, l, size)])
            .sum()
    }

    fn bessel(&self, power: &[f64], m: usize) -> f64 {
        if self.bessel_scale == 0.0 {
            0.0
        } else {
            ln_i0(self.bessel_scale * power[m].sqrt())
        }
    }

    /// Cheap upper bound on the Bessel term: `ln I₀(x) ≤ min(x, x²/4)`.
    fn bessel_bound(&self, power: &[f64], m: usize) -> f64 {
        if self.bessel_scale == 0.0 {
            0.0
        } else {
            let x = self.bessel_scale * power[m].sqrt();
            x.min(0.25 * x * x)
        }
    }
}

/// Noncoherent log-likelihood of symbol `m` with every `m`-independent
/// factor of the full likelihood dropped:
///
/// `ln I₀(2√(K̃(K̃+1)/(Mρ₀+σ²))·|Ȳ[m]|)
///  + Mρ₀|Ȳ[m]|² / (σ²(Mρ₀+(K₀+1)σ²))
///  + Σ_{ℓ≥1} Mρ_ℓ|Ȳ[(m−ℓ) mod M]|² / (σ²(Mρ_ℓ+σ²))`
///
/// The dropped part is the product of Rayleigh(σ) densities over all bins
/// together with the constant `(K̃+1)σ²e^{−K̃}/(Mρ₀+σ²)·Π σ²/(Mρ_ℓ+σ²)`.
pub fn nc_log_likelihood(spectrum: &DechirpedSpectrum, stats: &ChannelStatistics, m: usize) -> f64 {
    let w = NcMlWeights::new(stats);
    let power: Vec<f64> = spectrum.bins().iter().map(|v| v.norm_sqr()).collect();
    w.bessel(&power, m) + w.quadratic(&power, m)
}

/// Noncoherent ML decision from channel statistics alone.
pub fn detect_nc_ml(spectrum: &DechirpedSpectrum, stats: &ChannelStatistics) -> DetectionDecision {
    NcMlDetector::new(stats).detect(spectrum)
}

/// Noncoherent detector with cached weights and scratch buffers.
#[derive(Debug, Clone)]
pub struct NcMlDetector {
    weights: NcMlWeights,
    power: Vec<f64>,
    bound: Vec<f64>,
}

impl NcMlDetector {
    pub fn new(stats: &ChannelStatistics) -> Self {
        Self {
            weights: NcMlWeights::new(stats),
            power: Vec::new(),
            bound: Vec::new(),
        }
    }

    /// Metric of every candidate symbol, evaluated exhaustively.
    pub fn metrics(&mut self, spectrum: &DechirpedSpectrum) -> Vec<f64> {
        self.load(spectrum);
        (0..self.power.len())
            .map(|m| self.weights.bessel(&self.power, m) + self.weights.quadratic(&self.power, m))
            .collect()
    }

    fn load(&mut self, spectrum: &DechirpedSpectrum) {
        self.power.clear();
        self.power.extend(spectrum.bins().iter().map(|v| v.norm_sqr()));
    }

    /// Exact argmax. The Bessel term is only evaluated for candidates whose
    /// upper bound can still reach the best exact metric seen so far.
    pub fn detect(&mut self, spectrum: &DechirpedSpectrum) -> DetectionDecision {
        self.load(spectrum);
        let size = self.power.len();
        let w = &self.weights;
        if w.bessel_scale == 0.0 {
            return argmax((0..size).map(|m| w.quadratic(&self.power, m)));
        }
        self.bound.clear();
        for m in 0..size {
            let q = w.quadratic(&self.power, m);
            self.bound.push(q + w.bessel_bound(&self.power, m));
        }
        let seed = argmax(self.bound.iter().copied()).symbol;
        let exact = |m: usize| w.bessel(&self.power, m) + w.quadratic(&self.power, m);
        let mut best = DetectionDecision {
            symbol: seed,
            score: exact(seed),
        };
        for m in 0..size {
            if m == seed || self.bound[m] < best.score {
                continue;
            }
            let s = exact(m);
            if s > best.score || (s == best.score && m < best.symbol) {
                best = DetectionDecision { symbol: m, score: s };
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TdelVariant {
    /// Zero every bin below a quarter of the strongest bin's amplitude.
    Original,
    /// Keep only `L` consecutive bins `a, a − 1, …, a − L + 1`, placed where
    /// they capture the most preamble energy.
    Modified,
}

/// Spectral template for TDEL correlation, built from preamble upchirps.
#[derive(Clone)]
pub struct TdelReference {
    template: Vec<Complex64>,
    support: Vec<(usize, Complex64)>,
    fft: Option<FftCorrelator>,
}

#[derive(Clone)]
struct FftCorrelator {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // conj(DFT(template))
    template_dft_conj: Vec<Complex64>,
}

impl fmt::Debug for TdelReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TdelReference")
            .field("len", &self.template.len())
            .field("nonzero_bins", &self.support.len())
            .finish()
    }
}

impl TdelReference {
    pub fn from_template(template: Vec<Complex64>) -> Result<Self> {
        let support: Vec<(usize, Complex64)> = template
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(k, v)| (k, *v))
            .collect();
        if support.is_empty() {
            return Err(Error::ZeroReference);
        }
        let size = template.len();
        let log2 = usize::BITS - size.leading_zeros();
        // direct sparse correlation costs M·nnz, the FFT route ~3M·log₂M
        let fft = if support.len() > 2 * log2 as usize {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut t = template.clone();
            forward.process(&mut t);
            Some(FftCorrelator {
                forward,
                inverse,
                template_dft_conj: t.iter().map(|v| v.conj()).collect(),
            })
        } else {
            None
        };
        Ok(Self {
            template,
            support,
            fft,
        })
    }

    pub fn template(&self) -> &[Complex64] {
        &self.template
    }

    /// Indices of the template bins that were kept.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().map(|(k, _)| *k)
    }

    /// `|Σ_k Ȳ[(k+s) mod M]·R*[k]|` for every cyclic shift `s`.
    pub fn correlate(&self, spectrum: &DechirpedSpectrum) -> Vec<f64> {
        let bins = spectrum.bins();
        let size = bins.len();
        match &self.fft {
            None => (0..size)
                .map(|s| {
                    self.support
                        .iter()
                        .map(|(k, r)| bins[(k + s) % size] * r.conj())
                        .sum::<Complex64>()
                        .norm()
                })
                .collect(),
            Some(c) => {
                let mut buf = bins.to_vec();
                c.forward.process(&mut buf);
                for (b, t) in buf.iter_mut().zip(&c.template_dft_conj) {
                    *b *= t;
                }
                c.inverse.process(&mut buf);
                let scale = 1.0 / size as f64;
                buf.iter().map(|v| v.norm() * scale).collect()
            }
        }
    }
}

/// Average preamble spectra (all carrying chirp 0) and sparsify the result.
///
/// The modified variant needs the tap count from `stats`.
pub fn build_tdel_reference(
    preamble_spectra: &[DechirpedSpectrum],
    variant: TdelVariant,
    stats: Option<&ChannelStatistics>,
) -> Result<TdelReference> {
    let taps = match variant {
        TdelVariant::Original => 0,
        TdelVariant::Modified => stats
            .ok_or_else(|| Error::InvalidStatistics("modified TDEL needs the tap count".into()))?
            .num_taps(),
    };
    build_tdel_reference_with_taps(preamble_spectra, variant, taps)
}

/// As [`build_tdel_reference`], taking the tap count directly.
pub fn build_tdel_reference_with_taps(
    preamble_spectra: &[DechirpedSpectrum],
    variant: TdelVariant,
    num_taps: usize,
) -> Result<TdelReference> {
    let first = preamble_spectra.first().ok_or(Error::EmptyPreamble)?;
    let size = first.len();
    let mut avg = vec![Complex64::default(); size];
    for s in preamble_spectra {
        if s.len() != size {
            return Err(Error::LengthMismatch {
                expected: size,
                actual: s.len(),
            });
        }
        for (a, v) in avg.iter_mut().zip(s.bins()) {
            *a += v;
        }
    }
    let n = preamble_spectra.len() as f64;
    for a in &mut avg {
        *a /= n;
    }
    let peak = argmax(avg.iter().map(|v| v.norm_sqr()));
    if peak.score <= 0.0 {
        return Err(Error::ZeroReference);
    }
    match variant {
        TdelVariant::Original => {
            let threshold = 0.25 * peak.score.sqrt();
            for a in &mut avg {
                if a.norm() < threshold {
                    *a = Complex64::default();
                }
            }
        }
        TdelVariant::Modified => {
            if num_taps == 0 || num_taps > size {
                return Err(Error::TooManyTaps { taps: num_taps, m: size });
            }
            let window = |a: usize| (0..num_taps).map(|l| avg[wrap(a, l, size)].norm_sqr()).sum::<f64>();
            let anchor = argmax((0..size).map(window)).symbol;
            let keep: Vec<usize> = (0..num_taps).map(|l| wrap(anchor, l, size)).collect();
            for (k, a) in avg.iter_mut().enumerate() {
                if !keep.contains(&k) {
                    *a = Complex64::default();
                }
            }
        }
    }
    TdelReference::from_template(avg)
}

/// Shift with the largest correlation magnitude against the reference.
pub fn detect_tdel(spectrum: &DechirpedSpectrum, reference: &TdelReference) -> DetectionDecision {
    argmax(reference.correlate(spectrum).into_iter())
}
