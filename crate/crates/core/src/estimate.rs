//! Offline moment-based estimation of the noncoherent detector's statistics.
//!
//! Preamble upchirps (chirp 0) from many packets are accumulated bin by bin.
//! The off-support bins give the noise variance; the peak bin's second and
//! fourth moments give its Rician shape `K̃` through the standard moment
//! estimator, which is then mapped back to `K₀` and `ρ₀`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::detect::ChannelStatistics;
use crate::error::{Error, Result};
use crate::modem::DechirpedSpectrum;

/// Smallest tap power an estimate may report; keeps the statistics valid
/// when noise swamps a weak tap.
pub const MIN_TAP_POWER: f64 = 1e-12;

/// Upper clamp on `K̂₀` when the diffuse part of the peak bin vanishes.
pub const MAX_SHAPE_FACTOR: f64 = 1e6;

/// Per-bin running sums of `|Ȳ|²` and `|Ȳ|⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticAccumulator {
    sum_sq: Vec<f64>,
    sum_quad: Vec<f64>,
    count: u64,
}

impl StatisticAccumulator {
    pub fn new(alphabet: usize) -> Self {
        Self {
            sum_sq: vec![0.0; alphabet],
            sum_quad: vec![0.0; alphabet],
            count: 0,
        }
    }

    pub fn alphabet(&self) -> usize {
        self.sum_sq.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum_sq(&self) -> &[f64] {
        &self.sum_sq
    }

    pub fn sum_quad(&self) -> &[f64] {
        &self.sum_quad
    }

    /// Add one preamble spectrum. Its transmitted chirp must be 0.
    pub fn accumulate(&mut self, preamble: &DechirpedSpectrum) -> Result<()> {
        if preamble.len() != self.alphabet() {
            return Err(Error::LengthMismatch {
                expected: self.alphabet(),
                actual: preamble.len(),
            });
        }
        for ((s2, s4), v) in self.sum_sq.iter_mut().zip(&mut self.sum_quad).zip(preamble.bins()) {
            let p = v.norm_sqr();
            *s2 += p;
            *s4 += p * p;
        }
        self.count += 1;
        Ok(())
    }

    /// Field-wise sum with an accumulator built on disjoint observations.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.alphabet() != self.alphabet() {
            return Err(Error::LengthMismatch {
                expected: self.alphabet(),
                actual: other.alphabet(),
            });
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.sum_quad.iter_mut().zip(&other.sum_quad) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    fn mean_sq(&self, k: usize) -> f64 {
        self.sum_sq[k] / self.count as f64
    }

    fn mean_quad(&self, k: usize) -> f64 {
        self.sum_quad[k] / self.count as f64
    }
}

impl AddAssign<&DechirpedSpectrum> for StatisticAccumulator {
    fn add_assign(&mut self, rhs: &DechirpedSpectrum) {
        self.accumulate(rhs).expect("spectrum length matches accumulator");
    }
}

/// Shape factor of a Rician envelope from its raw moments `E[r²]`, `E[r⁴]`.
///
/// With `d = √(2m₂² − m₄)` (the line-of-sight power), `K = d / (m₂ − d)`.
/// Returns `None` when the moments are inconsistent with a Rician law
/// (`2m₂² < m₄`, i.e. heavier than Rayleigh tails); callers treat that as `K = 0`.
pub fn rician_k_from_moments(m2: f64, m4: f64) -> Option<f64> {
    let disc = 2.0 * m2 * m2 - m4;
    if !(m2 > 0.0) || disc < 0.0 {
        return None;
    }
    let d = disc.sqrt();
    if m2 - d <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(d / (m2 - d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedStatistics {
    pub stats: ChannelStatistics,
    /// Peak-bin shape factor before mapping back to `K₀`.
    pub peak_shape: f64,
    /// Set when the moment estimator had no real solution and `K̂` was forced to 0.
    pub degenerate: bool,
}

/// Estimate `ρ_ℓ`, `K₀` and `σ²` for an `num_taps`-tap channel.
pub fn estimate_statistics(acc: &StatisticAccumulator, num_taps: usize) -> Result<EstimatedStatistics> {
    if acc.count < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            have: acc.count,
        });
    }
    let size = acc.alphabet();
    if num_taps == 0 || num_taps >= size {
        return Err(Error::TooManyTaps { taps: num_taps, m: size });
    }
    let mf = size as f64;
    let support = |k: usize| k == 0 || k >= size - (num_taps - 1);
    let off: Vec<usize> = (0..size).filter(|k| !support(*k)).collect();
    let noise_var = off.iter().map(|k| acc.mean_sq(*k)).sum::<f64>() / off.len() as f64;

    let m2 = acc.mean_sq(0);
    let m4 = acc.mean_quad(0);
    let (peak_shape, degenerate) = match rician_k_from_moments(m2, m4) {
        Some(k) => (k, false),
        None => (0.0, true),
    };
    // LoS power of the peak bin and its diffuse channel part
    let los = if peak_shape.is_infinite() {
        m2
    } else {
        peak_shape * m2 / (peak_shape + 1.0)
    };
    let rho0 = ((m2 - noise_var) / mf).max(MIN_TAP_POWER);
    let diffuse_channel = m2 - los - noise_var;
    let k0 = if los <= 0.0 {
        0.0
    } else if diffuse_channel <= 0.0 {
        MAX_SHAPE_FACTOR
    } else {
        (los / diffuse_channel).min(MAX_SHAPE_FACTOR)
    };

    let mut tap_powers = vec![rho0];
    for l in 1..num_taps {
        let k = size - l;
        tap_powers.push(((acc.mean_sq(k) - noise_var) / mf).max(MIN_TAP_POWER));
    }
    let stats = ChannelStatistics::new(tap_powers, k0, noise_var.max(f64::MIN_POSITIVE), size)?;
    Ok(EstimatedStatistics {
        stats,
        peak_shape,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::convolve_circular;
    use crate::modem::{LoRaConfig, Modem};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cn<R: rand::Rng>(rng: &mut R, var: f64) -> Complex64 {
        let s = (var / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    }

    fn rice_moments(k: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let los = (k / (k + 1.0)).sqrt();
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..n {
            let p = (Complex64::new(los, 0.0) + cn(&mut rng, 1.0 / (k + 1.0))).norm_sqr();
            m2 += p;
            m4 += p * p;
        }
        (m2 / n as f64, m4 / n as f64)
    }

    #[test]
    fn counts_and_linearity() {
        let y = DechirpedSpectrum::from_bins(vec![Complex64::new(1.0, 2.0); 16]);
        let mut acc = StatisticAccumulator::new(16);
        acc.accumulate(&y).unwrap();
        assert_eq!(acc.count(), 1);
        let once = acc.clone();
        acc += &y;
        assert_eq!(acc.count(), 2);
        for k in 0..16 {
            assert_eq!(acc.sum_sq()[k], 2.0 * once.sum_sq()[k]);
            assert_eq!(acc.sum_quad()[k], 2.0 * once.sum_quad()[k]);
            assert!(acc.sum_quad()[k] * acc.count() as f64 >= acc.sum_sq()[k].powi(2));
        }
        assert!(acc.accumulate(&DechirpedSpectrum::from_bins(vec![Complex64::default(); 8])).is_err());
    }

    #[test]
    fn merge_is_fieldwise_sum() {
        let a_bins = DechirpedSpectrum::from_bins(vec![Complex64::new(1.0, 0.0); 8]);
        let b_bins = DechirpedSpectrum::from_bins(vec![Complex64::new(0.0, 3.0); 8]);
        let mut a = StatisticAccumulator::new(8);
        a += &a_bins;
        let mut b = StatisticAccumulator::new(8);
        b += &b_bins;
        let mut both = StatisticAccumulator::new(8);
        both += &a_bins;
        both += &b_bins;
        a.merge(&b).unwrap();
        assert_eq!(a, both);
    }

    #[test]
    fn noiseless_support_means() {
        let modem = Modem::new(LoRaConfig::default());
        let taps = [Complex64::new(0.8, 0.1), Complex64::new(0.0, -0.3)];
        let mut y = vec![Complex64::default(); 128];
        convolve_circular(&modem.modulate(0).unwrap().samples, &taps, &mut y);
        let spectrum = modem.demodulate(&y).unwrap();
        let mut acc = StatisticAccumulator::new(128);
        for _ in 0..1000 {
            acc += &spectrum;
        }
        assert!((acc.sum_sq()[0] / 1000.0 - 128.0 * taps[0].norm_sqr()).abs() < 1e-9);
        assert!((acc.sum_sq()[127] / 1000.0 - 128.0 * taps[1].norm_sqr()).abs() < 1e-9);
    }

    #[test]
    fn moment_estimator_recovers_k2() {
        let (m2, m4) = rice_moments(2.0, 100_000, 1);
        let k = rician_k_from_moments(m2, m4).unwrap();
        assert!((1.8..=2.2).contains(&k), "{k}");
    }

    #[test]
    fn moment_estimator_near_zero_for_rayleigh() {
        let mut clamped = 0;
        for seed in 0..40 {
            let (m2, m4) = rice_moments(0.0, 100_000, 100 + seed);
            match rician_k_from_moments(m2, m4) {
                None => clamped += 1,
                Some(k) => assert!(k < 0.3, "{k}"),
            }
        }
        // 2m₂² − m₄ is symmetric around zero for K = 0
        assert!((8..=32).contains(&clamped), "{clamped}");
    }

    fn synthetic_accumulator(k0: f64, rho: [f64; 2], s2: f64, n: usize, seed: u64) -> StatisticAccumulator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 128;
        let mf = m as f64;
        let mut acc = StatisticAccumulator::new(m);
        let los = (k0 * rho[0] / (k0 + 1.0)).sqrt();
        for _ in 0..n {
            let h0 = Complex64::from_polar(los, rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU))
                + cn(&mut rng, rho[0] / (k0 + 1.0));
            let h1 = cn(&mut rng, rho[1]);
            let bins: Vec<Complex64> = (0..m)
                .map(|k| {
                    let sig = match k {
                        0 => h0 * mf.sqrt(),
                        127 => h1 * mf.sqrt(),
                        _ => Complex64::default(),
                    };
                    sig + cn(&mut rng, s2)
                })
                .collect();
            acc += &DechirpedSpectrum::from_bins(bins);
        }
        acc
    }

    #[test]
    fn consistent_for_k2_and_k10() {
        for (k0, seed) in [(2.0, 7), (10.0, 8)] {
            let acc = synthetic_accumulator(k0, [0.93, 0.07], 1.0, 100_000, seed);
            let est = estimate_statistics(&acc, 2).unwrap();
            let s = &est.stats;
            assert!(((s.k0() - k0) / k0).abs() < 0.1, "K0 {}", s.k0());
            assert!((s.tap_powers()[0] / 0.93 - 1.0).abs() < 0.05);
            assert!((s.tap_powers()[1] / 0.07 - 1.0).abs() < 0.05);
            assert!((s.noise_var() - 1.0).abs() < 0.01);
            assert!(!est.degenerate);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let acc = synthetic_accumulator(0.0, [0.93, 0.07], 1.0, 100_000, 9);
        let est = estimate_statistics(&acc, 2).unwrap();
        assert!((0.99..=1.01).contains(&est.stats.noise_var()));
    }

    #[test]
    fn needs_two_observations() {
        let mut acc = StatisticAccumulator::new(16);
        acc += &DechirpedSpectrum::from_bins(vec![Complex64::new(1.0, 0.0); 16]);
        assert!(matches!(
            estimate_statistics(&acc, 2),
            Err(Error::InsufficientObservations { .. })
        ));
    }

    #[test]
    fn degenerate_moments_flagged() {
        // peak powers {0, 0, 3}: m₂ = 1, m₄ = 3 > 2m₂², no Rician solution
        let mut acc = StatisticAccumulator::new(16);
        for p in [0.0f64, 0.0, 3.0] {
            let mut bins = vec![Complex64::new(0.1, 0.0); 16];
            bins[0] = Complex64::new(p.sqrt(), 0.0);
            acc += &DechirpedSpectrum::from_bins(bins);
        }
        let est = estimate_statistics(&acc, 2).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.stats.k0(), 0.0);
    }
}
