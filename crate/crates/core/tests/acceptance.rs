//! One test per acceptance criterion. Each prints a single `PASS`/`FAIL`
//! line (plus the individual checks it is made of) and fails on `FAIL`.

mod common;

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lora_ncml::channel::{add_awgn, convolve_circular, noise_variance_from_snr_db, FadingGenerator};
use lora_ncml::detect::{detect_conventional, ChannelStatistics, NcMlDetector};
use lora_ncml::harness::bench::benchmark_detectors;
use lora_ncml::harness::checks::{self, CheckOutcome};
use lora_ncml::harness::recipes::FIGURE_K0;
use lora_ncml::harness::{recipe, run_scenario_with, to_csv_string, RecipeId, RunOptions, Scenario, SerRecord};
use lora_ncml::modem::upchirp_sample;
use lora_ncml::{DechirpedSpectrum, Modem};

use common::{argmax, full_log_likelihood, ks_test, rayleigh_cdf, rice_cdf};

const RANDOM_SPECTRA: usize = 100_000;
const KS_SAMPLES: usize = 100_000;
const KS_MIN_P: f64 = 0.01;
const KS_SNR_DB: [f64; 2] = [0.0, 10.0];
const ORACLE_ALPHABET: usize = 16;
const MAX_SHIFT_ALPHABET: usize = 64;
const BENCH_SF: (u32, u32) = (7, 11);
const BENCH_TRIALS: usize = 2000;

const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const KS_BUDGET: Duration = Duration::from_secs(120);
const FIG1_BUDGET: Duration = Duration::from_secs(15 * 60);
const FIG2_BUDGET: Duration = Duration::from_secs(20 * 60);
const FIG3_BUDGET: Duration = Duration::from_secs(15 * 60);

/// Criteria share the machine; timing-sensitive ones must not overlap.
static SERIAL: Mutex<()> = Mutex::new(());

type Law<'a> = (&'static str, &'a mut Vec<f64>, Box<dyn Fn(f64) -> f64>);

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cn(rng: &mut ChaCha8Rng, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re * s, im * s)
}

fn verdict(name: &str, outcomes: &[CheckOutcome]) {
    for o in outcomes {
        println!("    {o}");
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.as_str()).collect();
    let line = if failed.is_empty() {
        format!("PASS {name}")
    } else {
        format!("FAIL {name}: {}", failed.join("; "))
    };
    println!("{line}");
    assert!(failed.is_empty(), "{line}");
}

fn outcome(id: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id: id.to_string(),
        passed,
        detail,
    }
}

fn runtime_check(id: &str, elapsed: Duration, budget: Duration) -> CheckOutcome {
    outcome(
        &format!("{id} runtime"),
        elapsed <= budget,
        format!("{:.1} s (budget {} s)", elapsed.as_secs_f64(), budget.as_secs()),
    )
}

fn run_recipe(id: RecipeId, workers: usize) -> (Vec<SerRecord>, Duration) {
    let opts = RunOptions { workers, progress: false };
    let start = Instant::now();
    let mut records = Vec::new();
    for sc in &recipe(id).scenarios {
        records.extend(run_scenario_with(sc, &opts).expect("recipe scenario runs"));
    }
    (records, start.elapsed())
}

/// Time-invariant curves on one worker; shared by the reproduction,
/// Doppler-comparison and determinism criteria.
fn fig1() -> &'static (Vec<SerRecord>, Duration) {
    static FIG1: OnceLock<(Vec<SerRecord>, Duration)> = OnceLock::new();
    FIG1.get_or_init(|| run_recipe(RecipeId::Fig1, 1))
}

/// Random statistics: two taps, arbitrary split, `K₀` up to 15, SNR from
/// −10 to 20 dB.
fn random_statistics(rng: &mut ChaCha8Rng, alphabet: usize) -> ChannelStatistics {
    let r0: f64 = rng.random_range(0.05..1.0);
    let r1: f64 = rng.random_range(0.0..1.0);
    let k0: f64 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..15.0) };
    let sigma2 = 10f64.powf(rng.random_range(-2.0..1.0));
    ChannelStatistics::new(vec![r0 / (r0 + r1), r1 / (r0 + r1)], k0, sigma2, alphabet).unwrap()
}

/// Dechirped spectrum drawn from the model described by `stats`.
fn model_spectrum(rng: &mut ChaCha8Rng, stats: &ChannelStatistics, m: usize) -> DechirpedSpectrum {
    let size = stats.alphabet();
    let mf = size as f64;
    let rho = stats.tap_powers();
    let k0 = stats.k0();
    let mut bins: Vec<Complex64> = (0..size).map(|_| cn(rng, stats.noise_var())).collect();
    for (l, &r) in rho.iter().enumerate() {
        let mut h = cn(rng, if l == 0 { r / (k0 + 1.0) } else { r });
        if l == 0 {
            h += Complex64::from_polar((k0 * r / (k0 + 1.0)).sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
        }
        bins[(m + size - l) % size] += h * mf.sqrt();
    }
    DechirpedSpectrum::from_bins(bins)
}

#[test]
fn criterion_1_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac1);
    let mut agree = 0usize;
    let mut first_mismatch = None;
    for i in 0..RANDOM_SPECTRA {
        let stats = random_statistics(&mut rng, ORACLE_ALPHABET);
        // Half from the assumed model, half from an unrelated one.
        let spectrum = if i % 2 == 0 {
            let m = rng.random_range(0..ORACLE_ALPHABET);
            model_spectrum(&mut rng, &stats, m)
        } else {
            let other = random_statistics(&mut rng, ORACLE_ALPHABET);
            let m = rng.random_range(0..ORACLE_ALPHABET);
            model_spectrum(&mut rng, &other, m)
        };
        let fast = NcMlDetector::new(&stats).detect(&spectrum).symbol;
        let oracle = argmax((0..ORACLE_ALPHABET).map(|m| {
            full_log_likelihood(spectrum.bins(), stats.tap_powers(), stats.k0(), stats.noise_var(), m)
        }));
        if fast == oracle {
            agree += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some((i, fast, oracle));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "criterion 1 oracle equivalence",
        &[
            outcome(
                "argmax agreement",
                agree == RANDOM_SPECTRA,
                format!("{agree}/{RANDOM_SPECTRA} spectra at M = {ORACLE_ALPHABET}, L = 2; first mismatch {first_mismatch:?}"),
            ),
            runtime_check("oracle", elapsed, ORACLE_BUDGET),
        ],
    );
}

#[test]
fn criterion_2_distribution_conformance() {
    let _g = serial();
    let start = Instant::now();
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac2);
    for &k0 in &FIGURE_K0 {
        for &snr in &KS_SNR_DB {
            let sc = Scenario { k0, ..Default::default() };
            let profile = sc.channel_profile().unwrap();
            let config = sc.lora_config().unwrap();
            let modem = Modem::new(config);
            let size = modem.m();
            let mf = size as f64;
            let rho = profile.tap_powers().to_vec();
            assert_eq!(rho.len(), 2, "EVA at 500 kHz resolves to two taps");
            let sigma2 = noise_variance_from_snr_db(snr);
            let generator = FadingGenerator::new(profile, 1, config.symbol_duration_s()).unwrap();
            let (mut peak, mut tap, mut noise) = (Vec::new(), Vec::new(), Vec::new());
            let mut rx = vec![Complex64::default(); size];
            for _ in 0..KS_SAMPLES {
                let h = generator.realize_packet(&mut rng);
                let m = rng.random_range(0..size);
                let tx = modem.modulate(m).unwrap();
                convolve_circular(&tx.samples, h.taps(0), &mut rx);
                add_awgn(&mut rx, sigma2, &mut rng);
                let y = modem.demodulate(&rx).unwrap();
                peak.push(y.bins()[m].norm());
                tap.push(y.bins()[(m + size - 1) % size].norm());
                noise.push(y.bins()[(m + size / 2) % size].norm());
            }
            let los = k0 * mf * rho[0] / (k0 + 1.0);
            let diffuse = mf * rho[0] / (k0 + 1.0) + sigma2;
            let tap_power = mf * rho[1] + sigma2;
            let laws: [Law; 3] = [
                ("peak Rice", &mut peak, Box::new(move |r| rice_cdf(r, los, diffuse))),
                ("tap Rayleigh", &mut tap, Box::new(move |r| rayleigh_cdf(r, tap_power))),
                ("noise Rayleigh", &mut noise, Box::new(move |r| rayleigh_cdf(r, sigma2))),
            ];
            for (name, samples, cdf) in laws {
                let (d, p) = ks_test(samples, cdf);
                out.push(outcome(
                    &format!("K0={k0} SNR={snr} dB {name}"),
                    p > KS_MIN_P,
                    format!("D = {d:.5}, p = {p:.4}"),
                ));
            }
        }
    }
    out.push(runtime_check("KS", start.elapsed(), KS_BUDGET));
    verdict("criterion 2 distribution conformance", &out);
}

#[test]
fn criterion_3_reduction_equivalences() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac3);
    let mut identical = 0usize;
    for _ in 0..RANDOM_SPECTRA {
        let size = 1usize << rng.random_range(4..=8);
        let k0 = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..20.0) };
        let sigma2 = 10f64.powf(rng.random_range(-2.0..1.0));
        let stats = ChannelStatistics::new(vec![1.0], k0, sigma2, size).unwrap();
        let m = rng.random_range(0..size);
        let spectrum = model_spectrum(&mut rng, &stats, m);
        if NcMlDetector::new(&stats).detect(&spectrum).symbol == detect_conventional(&spectrum).symbol {
            identical += 1;
        }
    }

    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for sf in 1..=MAX_SHIFT_ALPHABET.trailing_zeros() {
        let size = 1usize << sf;
        let symbol = |m: usize| -> Vec<Complex64> { (0..size).map(|n| upchirp_sample(size, (n + m) % size)).collect() };
        for m in 0..size {
            let taps: Vec<Complex64> = (0..rng.random_range(1..=size)).map(|_| cn(&mut rng, 1.0)).collect();
            let s = symbol(m);
            let mut circ = vec![Complex64::default(); size];
            convolve_circular(&s, &taps, &mut circ);
            let scale: f64 = taps.iter().map(|h| h.norm()).sum();
            for (n, c) in circ.iter().enumerate() {
                let shifted: Complex64 = taps
                    .iter()
                    .enumerate()
                    .map(|(l, h)| h * symbol((m + size - l) % size)[n])
                    .sum();
                worst = worst.max((c - shifted).norm() / scale);
            }
            cases += 1;
        }
    }
    verdict(
        "criterion 3 reduction equivalences",
        &[
            outcome(
                "single tap equals conventional",
                identical == RANDOM_SPECTRA,
                format!("{identical}/{RANDOM_SPECTRA} identical decisions"),
            ),
            outcome(
                "circular convolution equals shifted-symbol sum",
                worst <= 8.0 * f64::EPSILON,
                format!("{cases} (M, m) cases up to M = {MAX_SHIFT_ALPHABET}, worst relative error {worst:.2e}"),
            ),
        ],
    );
}

#[test]
fn criterion_4_time_invariant_reproduction() {
    let _g = serial();
    let (records, elapsed) = fig1();
    let mut out = checks::fig1_checks(records);
    out.push(runtime_check("fig1", *elapsed, FIG1_BUDGET));
    verdict("criterion 4 time-invariant reproduction", &out);
}

#[test]
fn criterion_5_time_variant_reproduction() {
    let _g = serial();
    let (records, elapsed) = run_recipe(RecipeId::Fig2, 0);
    let mut out = checks::fig2_checks(&records, &fig1().0);
    out.push(runtime_check("fig2", elapsed, FIG2_BUDGET));
    verdict("criterion 5 time-variant reproduction", &out);
}

#[test]
fn criterion_6_estimated_statistics() {
    let _g = serial();
    let (records, elapsed) = run_recipe(RecipeId::Fig3, 0);
    let mut out = checks::fig3_checks(&records);
    out.push(runtime_check("fig3", elapsed, FIG3_BUDGET));
    verdict("criterion 6 estimated statistics", &out);
}

#[test]
fn criterion_7_complexity() {
    let _g = serial();
    let table = benchmark_detectors(BENCH_SF.0..=BENCH_SF.1, BENCH_TRIALS).unwrap();
    println!("{}", table.to_text());
    let out = checks::complexity_checks(&table);
    verdict("criterion 7 complexity", &out);
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let single = to_csv_string(&fig1().0, false);
    let (multi, _) = run_recipe(RecipeId::Fig1, 4);
    let multi = to_csv_string(&multi, false);
    verdict(
        "criterion 8 determinism",
        &[outcome(
            "fig1 CSV with 1 and 4 workers",
            single == multi,
            format!("{} bytes vs {} bytes", single.len(), multi.len()),
        )],
    );
}
