#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::gamma_lr;

/// Two-sided one-sample Kolmogorov-Smirnov test; returns `(D, p)` using the
/// asymptotic Kolmogorov distribution with the Stephens correction.
pub fn ks_test(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sq = n.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// CDF of `|X|` for `X` complex Gaussian with mean power `los_power` and
/// diffuse power `diffuse_power` (both as `E|·|²`). `R²/(P/2)` is noncentral
/// chi-square with two degrees of freedom; the CDF is its Poisson mixture of
/// central chi-square CDFs.
pub fn rice_cdf(r: f64, los_power: f64, diffuse_power: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * diffuse_power;
    let x = r * r / half;
    let mu = los_power / diffuse_power;
    if mu == 0.0 {
        return rayleigh_cdf(r, diffuse_power);
    }
    let mut acc = 0.0;
    let jmax = (mu + 12.0 * mu.sqrt() + 60.0) as usize;
    for j in 0..=jmax {
        let jf = j as f64;
        let log_w = -mu + jf * mu.ln() - ln_factorial(j);
        acc += log_w.exp() * gamma_lr(jf + 1.0, 0.5 * x);
    }
    acc.min(1.0)
}

pub fn rayleigh_cdf(r: f64, power: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        -(-r * r / power).exp_m1()
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln I₀(x)` by the trapezoid rule on `I₀(x) = (1/π) ∫₀^π exp(x cos θ) dθ`,
/// factored as `x + ln(...)` so the integrand stays bounded. The integrand
/// is periodic and analytic, so the node count only needs to grow like `√x`.
pub fn ln_i0_quadrature(x: f64) -> f64 {
    let x = x.abs();
    let n = 64 + (10.0 * x.sqrt()) as usize;
    let h = PI / n as f64;
    let f = |t: f64| (x * (t.cos() - 1.0)).exp();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..n {
        s += f(i as f64 * h);
    }
    x + (s / n as f64).ln()
}

/// Log of the joint density of all `M` bin magnitudes when symbol `m` was
/// sent: a Rice law on bin `m`, Rayleigh laws on bins `m − ℓ` for the
/// remaining taps and pure-noise Rayleigh laws elsewhere.
pub fn full_log_likelihood(bins: &[Complex64], rho: &[f64], k0: f64, sigma2: f64, m: usize) -> f64 {
    let size = bins.len();
    let mf = size as f64;
    let mut powers = vec![sigma2; size];
    for (l, &r) in rho.iter().enumerate().skip(1) {
        powers[(m + size - l) % size] = mf * r + sigma2;
    }
    let mut total = 0.0;
    for (k, y) in bins.iter().enumerate() {
        let a = y.norm();
        if k == m {
            let los = k0 * mf * rho[0] / (k0 + 1.0);
            let diffuse = mf * rho[0] / (k0 + 1.0) + sigma2;
            total += (2.0 * a / diffuse).ln() - (a * a + los) / diffuse + ln_i0_quadrature(2.0 * a * los.sqrt() / diffuse);
        } else {
            let p = powers[k];
            total += (2.0 * a / p).ln() - a * a / p;
        }
    }
    total
}

pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
