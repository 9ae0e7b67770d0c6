//! Python bindings: modem, channel statistics, detectors, estimation and
//! the Monte Carlo harness.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lora_ncml::channel::{self, profile_from_path_table};
use lora_ncml::detect::{self, TdelReference, TdelVariant};
use lora_ncml::estimate;
use lora_ncml::harness::{self, RunOptions};
use lora_ncml::{DechirpedSpectrum, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn spectrum(bins: Vec<Complex64>) -> DechirpedSpectrum {
    DechirpedSpectrum::from_bins(bins)
}

#[pyclass(name = "Modem", module = "lora_ncml", frozen)]
struct PyModem(lora_ncml::Modem);

#[pymethods]
impl PyModem {
    #[new]
    #[pyo3(signature = (sf = 7, bandwidth_hz = 500e3))]
    fn new(sf: u32, bandwidth_hz: f64) -> PyResult<Self> {
        let cfg = lora_ncml::LoRaConfig::new(sf, bandwidth_hz).map_err(py_err)?;
        Ok(Self(lora_ncml::Modem::new(cfg)))
    }

    #[getter]
    fn sf(&self) -> u32 {
        self.0.config().sf()
    }

    /// Alphabet size `M = 2^SF`.
    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.0.config().bandwidth_hz()
    }

    #[getter]
    fn symbol_duration_s(&self) -> f64 {
        self.0.config().symbol_duration_s()
    }

    fn upchirp(&self) -> Vec<Complex64> {
        self.0.upchirp().to_vec()
    }

    fn modulate(&self, m: usize) -> PyResult<Vec<Complex64>> {
        Ok(self.0.modulate(m).map_err(py_err)?.samples)
    }

    /// Dechirp, unitary DFT and phase correction of one received window.
    fn demodulate(&self, samples: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        Ok(self.0.demodulate(&samples).map_err(py_err)?.into_bins())
    }

    fn __repr__(&self) -> String {
        format!("Modem({})", self.0.config())
    }
}

#[pyclass(name = "ChannelStatistics", module = "lora_ncml", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyChannelStatistics(detect::ChannelStatistics);

#[pymethods]
impl PyChannelStatistics {
    #[new]
    fn new(tap_powers: Vec<f64>, k0: f64, noise_var: f64, alphabet: usize) -> PyResult<Self> {
        detect::ChannelStatistics::new(tap_powers, k0, noise_var, alphabet)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn tap_powers(&self) -> Vec<f64> {
        self.0.tap_powers().to_vec()
    }

    #[getter]
    fn k0(&self) -> f64 {
        self.0.k0()
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.0.noise_var()
    }

    #[getter]
    fn alphabet(&self) -> usize {
        self.0.alphabet()
    }

    #[getter]
    fn num_taps(&self) -> usize {
        self.0.num_taps()
    }

    /// Shape factor of the peak-bin magnitude, `K₀Mρ₀/(Mρ₀+(K₀+1)σ²)`.
    fn derived_shape(&self) -> f64 {
        self.0.derived_shape()
    }

    fn with_noise_var(&self, noise_var: f64) -> PyResult<Self> {
        self.0.with_noise_var(noise_var).map(Self).map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        detect::ChannelStatistics::from_toml_str(text).map(Self).map_err(py_err)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        detect::ChannelStatistics::load(path).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelStatistics(tap_powers={:?}, k0={}, noise_var={}, alphabet={})",
            self.0.tap_powers(),
            self.0.k0(),
            self.0.noise_var(),
            self.0.alphabet()
        )
    }
}

/// Reusable noncoherent detector for one set of statistics.
#[pyclass(name = "NcMlDetector", module = "lora_ncml")]
struct PyNcMlDetector(detect::NcMlDetector);

#[pymethods]
impl PyNcMlDetector {
    #[new]
    fn new(stats: &PyChannelStatistics) -> Self {
        Self(detect::NcMlDetector::new(&stats.0))
    }

    /// `(symbol, score)` for one dechirped spectrum.
    fn detect(&mut self, bins: Vec<Complex64>) -> (usize, f64) {
        let d = self.0.detect(&spectrum(bins));
        (d.symbol, d.score)
    }

    /// Metric of every candidate symbol.
    fn metrics(&mut self, bins: Vec<Complex64>) -> Vec<f64> {
        self.0.metrics(&spectrum(bins))
    }
}

#[pyclass(name = "TdelReference", module = "lora_ncml", frozen)]
struct PyTdelReference(TdelReference);

#[pymethods]
impl PyTdelReference {
    /// Build from preamble spectra; `variant` is `"original"` or `"modified"`.
    #[staticmethod]
    #[pyo3(signature = (preamble, variant = "original", num_taps = 1))]
    fn from_preamble(preamble: Vec<Vec<Complex64>>, variant: &str, num_taps: usize) -> PyResult<Self> {
        let variant = match variant {
            "original" => TdelVariant::Original,
            "modified" => TdelVariant::Modified,
            other => return Err(PyValueError::new_err(format!("unknown TDEL variant `{other}`"))),
        };
        let spectra: Vec<DechirpedSpectrum> = preamble.into_iter().map(spectrum).collect();
        detect::build_tdel_reference_with_taps(&spectra, variant, num_taps)
            .map(Self)
            .map_err(py_err)
    }

    fn template(&self) -> Vec<Complex64> {
        self.0.template().to_vec()
    }

    fn support(&self) -> Vec<usize> {
        self.0.support().collect()
    }

    fn detect(&self, bins: Vec<Complex64>) -> (usize, f64) {
        let d = detect::detect_tdel(&spectrum(bins), &self.0);
        (d.symbol, d.score)
    }
}

#[pyfunction]
fn detect_conventional(bins: Vec<Complex64>) -> (usize, f64) {
    let d = detect::detect_conventional(&spectrum(bins));
    (d.symbol, d.score)
}

#[pyfunction]
fn detect_coherent(bins: Vec<Complex64>, taps: Vec<Complex64>) -> (usize, f64) {
    let d = detect::detect_coherent_ml(&spectrum(bins), &taps);
    (d.symbol, d.score)
}

#[pyfunction]
fn detect_ncml(bins: Vec<Complex64>, stats: &PyChannelStatistics) -> (usize, f64) {
    let d = detect::detect_nc_ml(&spectrum(bins), &stats.0);
    (d.symbol, d.score)
}

#[pyfunction]
fn ln_i0(x: f64) -> f64 {
    lora_ncml::bessel::ln_i0(x)
}

#[pyfunction]
fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
    channel::noise_variance_from_snr_db(snr_db)
}

/// Tap powers after collapsing a path table (delays in ns, powers in dB)
/// onto sample-spaced taps at `bandwidth_hz`.
#[pyfunction]
#[pyo3(signature = (delays_ns, powers_db, bandwidth_hz = 500e3))]
fn tap_powers_from_path_table(delays_ns: Vec<f64>, powers_db: Vec<f64>, bandwidth_hz: f64) -> PyResult<Vec<f64>> {
    let table = channel::PathTable::new(delays_ns, powers_db).map_err(py_err)?;
    Ok(profile_from_path_table(&table, bandwidth_hz, 0.0, 0.0)
        .map_err(py_err)?
        .tap_powers()
        .to_vec())
}

/// Per-symbol tap gains of one packet, shape `num_symbols × L`.
#[pyfunction]
#[pyo3(signature = (tap_powers, k0, doppler_hz, num_symbols, symbol_duration_s, seed))]
fn realize_packet(
    tap_powers: Vec<f64>,
    k0: f64,
    doppler_hz: f64,
    num_symbols: usize,
    symbol_duration_s: f64,
    seed: u64,
) -> PyResult<Vec<Vec<Complex64>>> {
    let profile = channel::ChannelProfile::new(tap_powers, k0, doppler_hz).map_err(py_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = channel::realize_packet(&profile, num_symbols, symbol_duration_s, &mut rng).map_err(py_err)?;
    Ok(r.iter().map(<[Complex64]>::to_vec).collect())
}

/// Circular convolution of one symbol with `taps`, plus AWGN of variance `noise_var`.
#[pyfunction]
#[pyo3(signature = (samples, taps, noise_var = 0.0, seed = 0))]
fn apply_channel(samples: Vec<Complex64>, taps: Vec<Complex64>, noise_var: f64, seed: u64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); samples.len()];
    channel::convolve_circular(&samples, &taps, &mut out);
    if noise_var > 0.0 {
        channel::add_awgn(&mut out, noise_var, &mut ChaCha8Rng::seed_from_u64(seed));
    }
    out
}

/// Moment estimate from preamble spectra (all carrying chirp 0).
/// Returns `(statistics, degenerate)`.
#[pyfunction]
fn estimate_statistics(preambles: Vec<Vec<Complex64>>, num_taps: usize) -> PyResult<(PyChannelStatistics, bool)> {
    let size = preambles.first().map_or(0, Vec::len);
    let mut acc = estimate::StatisticAccumulator::new(size);
    for p in preambles {
        acc.accumulate(&spectrum(p)).map_err(py_err)?;
    }
    let est = estimate::estimate_statistics(&acc, num_taps).map_err(py_err)?;
    Ok((PyChannelStatistics(est.stats), est.degenerate))
}

/// Built-in figure recipe as a list of scenario TOML strings.
#[pyfunction]
fn recipe_scenarios(id: &str) -> PyResult<Vec<String>> {
    let id: harness::RecipeId = id.parse().map_err(py_err)?;
    Ok(harness::recipe(id).scenarios.iter().map(|s| s.to_toml_string()).collect())
}

/// Channel fingerprint of a scenario given as TOML text.
#[pyfunction]
fn fingerprint(scenario_toml: &str) -> PyResult<String> {
    let sc = harness::Scenario::from_toml_str(scenario_toml).map_err(py_err)?;
    harness::fingerprint(&sc).map_err(py_err)
}

/// Run a scenario given as TOML text; one dict per (detector, SNR) point.
#[pyfunction]
#[pyo3(signature = (scenario_toml, workers = 0))]
fn run_scenario<'py>(py: Python<'py>, scenario_toml: &str, workers: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sc = harness::Scenario::from_toml_str(scenario_toml).map_err(py_err)?;
    let opts = RunOptions { workers, progress: false };
    let records = py.detach(|| harness::run_scenario_with(&sc, &opts)).map_err(py_err)?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("scenario", r.scenario)?;
            d.set_item("fingerprint", r.fingerprint)?;
            d.set_item("sf", r.sf)?;
            d.set_item("k0", r.k0)?;
            d.set_item("doppler_hz", r.doppler_hz)?;
            d.set_item("statistics", r.statistics)?;
            d.set_item("detector", r.detector.id())?;
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("symbols", r.symbols)?;
            d.set_item("errors", r.errors)?;
            d.set_item("ser", r.ser)?;
            d.set_item("wall_time_s", r.wall_time_s)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "lora_ncml")]
pub fn lora_ncml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModem>()?;
    m.add_class::<PyChannelStatistics>()?;
    m.add_class::<PyNcMlDetector>()?;
    m.add_class::<PyTdelReference>()?;
    m.add_function(wrap_pyfunction!(detect_conventional, m)?)?;
    m.add_function(wrap_pyfunction!(detect_coherent, m)?)?;
    m.add_function(wrap_pyfunction!(detect_ncml, m)?)?;
    m.add_function(wrap_pyfunction!(ln_i0, m)?)?;
    m.add_function(wrap_pyfunction!(noise_variance_from_snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(tap_powers_from_path_table, m)?)?;
    m.add_function(wrap_pyfunction!(realize_packet, m)?)?;
    m.add_function(wrap_pyfunction!(apply_channel, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(recipe_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
