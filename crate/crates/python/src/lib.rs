//! Python bindings. Configuration crosses the boundary as TOML text, results
//! as dicts and plain lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rram_baseband::config::{parse_config_str, to_toml, RunConfig};
use rram_baseband::crossbar::{trace_pair, Scheme};
use rram_baseband::device::{DeviceModel as CoreDevice, DevicePreset};
use rram_baseband::latency_theory::{latency_bound as core_bound, mc_write_latency as core_mc, LatencyMode};
use rram_baseband::linmap::{self, ComplexMatrix, C64 as Complex64};
use rram_baseband::mimo::{self, DetectMode};
use rram_baseband::modem;
use rram_baseband::ofdm::{Direction, ExactDft};
use rram_baseband::pipeline::{self, FrameResult, Variant, Workload};
use rram_baseband::{rng, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn complex_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("matrix must be a non-empty rectangular list of rows"));
    }
    ComplexMatrix::from_vec(r, c, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn detect_mode(s: &str) -> PyResult<DetectMode> {
    match s {
        "lmmse" => Ok(DetectMode::Lmmse),
        "zf" => Ok(DetectMode::Zf),
        _ => Err(PyValueError::new_err(format!("unknown detector `{s}` (expected lmmse or zf)"))),
    }
}

fn rows_of<T: Copy>(data: &[T], cols: usize) -> Vec<Vec<T>> {
    data.chunks(cols.max(1)).map(<[T]>::to_vec).collect()
}

/// Device parameters, usually built from a preset name.
#[pyclass(module = "rram_baseband_py", from_py_object)]
#[derive(Clone)]
pub struct DeviceModel {
    inner: CoreDevice,
}

#[pymethods]
impl DeviceModel {
    #[new]
    #[pyo3(signature = (preset = "ta_taox_pt"))]
    fn new(preset: &str) -> PyResult<Self> {
        Ok(Self {
            inner: rram_baseband::device::preset(preset).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        DevicePreset::ALL.iter().map(|p| p.name()).collect()
    }

    fn noiseless(&self) -> Self {
        Self {
            inner: self.inner.noiseless(),
        }
    }

    #[getter]
    fn g_min(&self) -> f64 {
        self.inner.g_min
    }
    #[getter]
    fn g_max(&self) -> f64 {
        self.inner.g_max
    }
    #[getter]
    fn n_states(&self) -> u32 {
        self.inner.n_states
    }
    #[getter]
    fn pulse_width(&self) -> f64 {
        self.inner.pulse_width
    }
    #[getter]
    fn sigma_read(&self) -> f64 {
        self.inner.sigma_read
    }

    /// `(mu, sigma)` of the conductance drift.
    fn drift(&self) -> (f64, f64) {
        let d = self.inner.drift_params();
        (d.mu, d.sigma)
    }

    fn __repr__(&self) -> String {
        format!(
            "DeviceModel(g_min={}, g_max={}, n_states={}, pulse_width={})",
            self.inner.g_min, self.inner.g_max, self.inner.n_states, self.inner.pulse_width
        )
    }
}

/// Full run configuration. Defaults are the 1024-sub-carrier 4x4 frame.
#[pyclass(module = "rram_baseband_py", from_py_object)]
#[derive(Clone)]
pub struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config_str(toml).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        to_toml(&self.inner).map_err(to_py)
    }

    #[getter]
    fn n_c(&self) -> usize {
        self.inner.frame.n_c
    }
    #[getter]
    fn n_t(&self) -> usize {
        self.inner.frame.n_t
    }
    #[getter]
    fn n_r(&self) -> usize {
        self.inner.frame.n_r
    }
    #[getter]
    fn symbols(&self) -> usize {
        self.inner.frame.symbols
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.frame.snr_db
    }
    #[setter]
    fn set_snr_db(&mut self, v: f64) {
        self.inner.frame.snr_db = v;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.frame.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.frame.seed = v;
    }
    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.frame.scheme.name()
    }
    #[setter]
    fn set_scheme(&mut self, v: &str) -> PyResult<()> {
        self.inner.frame.scheme = v.parse().map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn device(&self) -> DeviceModel {
        DeviceModel {
            inner: self.inner.frame.device.clone(),
        }
    }

    fn capacity_bits(&self) -> usize {
        self.inner.frame.capacity_bits()
    }
}

fn result_dict<'py>(py: Python<'py>, r: &FrameResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mer_db", r.metrics.mer_db)?;
    d.set_item("ber", r.metrics.ber)?;
    d.set_item("bit_errors", r.metrics.bit_errors)?;
    d.set_item("bits", r.metrics.bits)?;
    d.set_item("latency_s", r.latency())?;
    d.set_item("latency_program_s", r.latency_program)?;
    d.set_item("latency_data_s", r.latency_data)?;
    d.set_item("energy_j", r.energy())?;
    d.set_item("energy_program_j", r.energy_program)?;
    d.set_item("energy_data_j", r.energy_data)?;
    d.set_item("throughput_bps", r.throughput)?;
    d.set_item("energy_efficiency_bpj", r.energy_efficiency)?;
    d.set_item("detection_failures", r.detection_failures)?;
    d.set_item("unreached_cells", r.unreached_cells)?;
    Ok(d)
}

/// A receiver with its DFT array programmed once, reused across frames.
#[pyclass(module = "rram_baseband_py")]
pub struct Transceiver {
    inner: pipeline::Transceiver,
}

#[pymethods]
impl Transceiver {
    #[new]
    fn new(py: Python<'_>, config: &Config) -> PyResult<Self> {
        let frame = config.inner.frame.clone();
        let inner = py.detach(move || pipeline::Transceiver::new(&frame)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Runs frame number `frame`; `snr_db` overrides the configured SNR.
    #[pyo3(signature = (frame = 0, snr_db = None))]
    fn run_frame<'py>(&self, py: Python<'py>, frame: u64, snr_db: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let snr = snr_db.unwrap_or(self.inner.config().snr_db);
        let out = py.detach(|| self.inner.run_frame_at(frame, None, snr)).map_err(to_py)?;
        let d = result_dict(py, &out.result)?;
        d.set_item("rx_symbols", out.rx_symbols)?;
        d.set_item("tx_symbols", out.tx_symbols)?;
        Ok(d)
    }
}

#[pyfunction]
fn run_frame<'py>(py: Python<'py>, config: &Config) -> PyResult<Bound<'py, PyDict>> {
    let frame = config.inner.frame.clone();
    let r = py.detach(move || pipeline::run_frame(&frame)).map_err(to_py)?;
    result_dict(py, &r)
}

/// Rows of `(snr_db, scheme, mode, trial, mer_db, ber)`.
#[pyfunction]
#[pyo3(signature = (config, variants = None, snr_db = None, trials = None))]
fn sweep_snr(
    py: Python<'_>,
    config: &Config,
    variants: Option<Vec<String>>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
) -> PyResult<Vec<(f64, String, String, usize, f64, f64)>> {
    let c = &config.inner;
    let variants: Vec<Variant> = match variants {
        Some(v) => v.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(to_py)?,
        None => c.sweep.variants.clone(),
    };
    let snrs = snr_db.unwrap_or_else(|| c.sweep.snr_db.clone());
    let trials = trials.unwrap_or(c.sweep.trials);
    let rows = py
        .detach(|| pipeline::sweep_snr(&c.frame, &variants, &snrs, trials))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.snr_db, r.scheme, r.mode, r.trial, r.mer_db, r.ber)).collect())
}

/// Rows of `(n_antennas, scheme, latency_s, energy_j, ci95)`.
#[pyfunction]
#[pyo3(signature = (config, schemes, antennas, trials = 1))]
fn sweep_antennas(
    py: Python<'_>,
    config: &Config,
    schemes: Vec<String>,
    antennas: Vec<usize>,
    trials: usize,
) -> PyResult<Vec<(usize, String, f64, f64, Option<f64>)>> {
    let schemes: Vec<Scheme> = schemes.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(to_py)?;
    let frame = &config.inner.frame;
    let rows = py
        .detach(|| pipeline::sweep_antennas(frame, &schemes, &antennas, trials))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.n_antennas, r.scheme, r.latency_s, r.energy_j, r.ci95)).collect())
}

#[pyfunction]
#[pyo3(signature = (scheme, n_t, n_r, device = None))]
fn latency_bound(scheme: &str, n_t: usize, n_r: usize, device: Option<&DeviceModel>) -> PyResult<f64> {
    let model = device.map_or_else(|| DevicePreset::TaTaoxPt.model(), |d| d.inner.clone());
    Ok(core_bound(scheme.parse().map_err(to_py)?, n_t, n_r, &model).map_err(to_py)?.bound)
}

/// Monte Carlo write latency; returns `(mean, ci95)`.
#[pyfunction]
#[pyo3(signature = (scheme, n_t, n_r, device = None, mode = "analytic", trials = 200, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn mc_write_latency(
    py: Python<'_>,
    scheme: &str,
    n_t: usize,
    n_r: usize,
    device: Option<&DeviceModel>,
    mode: &str,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, Option<f64>)> {
    let model = device.map_or_else(|| DevicePreset::TaTaoxPt.model(), |d| d.inner.clone());
    let mode = match mode {
        "analytic" => LatencyMode::Analytic,
        "discrete" => LatencyMode::Discrete,
        m => return Err(PyValueError::new_err(format!("unknown latency mode `{m}`"))),
    };
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let mc = py
        .detach(|| core_mc(n_t, n_r, &model, scheme, mode, trials, &mut rng::seeded(seed)))
        .map_err(to_py)?;
    Ok((mc.write.mean, mc.write.ci95))
}

/// Per-pulse programming trace of one differential pair: rows of
/// `(target, side, voltage_v, conductance_s, duration_s, energy_j, is_read)`.
#[pyfunction]
#[pyo3(signature = (value, scheme = "with_verification", device = None, seed = 0))]
fn program_trace(
    value: f64,
    scheme: &str,
    device: Option<&DeviceModel>,
    seed: u64,
) -> PyResult<Vec<(f64, &'static str, f64, f64, f64, f64, bool)>> {
    if !value.is_finite() || value.abs() > 1.0 {
        return Err(PyValueError::new_err("value must lie in [-1, 1]"));
    }
    let model = device.map_or_else(|| DevicePreset::TaTaoxPt.model(), |d| d.inner.clone());
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let events = trace_pair(value, scheme, &model, &Default::default(), &mut rng::seeded(seed));
    Ok(events
        .into_iter()
        .map(|e| (e.target, e.side.name(), e.voltage, e.conductance, e.duration, e.energy, e.is_read))
        .collect())
}

#[pyfunction]
fn real_map_matrix(a: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = linmap::real_map_matrix(&complex_matrix(a)?);
    Ok(rows_of(m.as_slice(), m.cols()))
}

#[pyfunction]
fn real_map_vector(x: Vec<Complex64>) -> Vec<f64> {
    linmap::real_map_vector(&x)
}

#[pyfunction]
fn unmap_vector(r: Vec<f64>) -> PyResult<Vec<Complex64>> {
    linmap::unmap_vector(&r).map_err(to_py)
}

#[pyfunction]
fn gray_encode(n: u64) -> u64 {
    modem::gray_encode(n)
}

#[pyfunction]
fn gray_decode(g: u64) -> u64 {
    modem::gray_decode(g)
}

#[pyfunction]
fn qam16_modulate(bits: Vec<u8>) -> PyResult<Vec<Complex64>> {
    modem::qam16_modulate(&bits).map_err(to_py)
}

#[pyfunction]
fn qam16_demodulate(symbols: Vec<Complex64>) -> Vec<u32> {
    modem::qam16_demodulate(&symbols).into_iter().map(u32::from).collect()
}

/// Unitary DFT (or inverse with `inverse=True`).
#[pyfunction]
#[pyo3(signature = (x, inverse = false))]
fn dft(x: Vec<Complex64>, inverse: bool) -> PyResult<Vec<Complex64>> {
    let dir = if inverse { Direction::Inverse } else { Direction::Forward };
    ExactDft::new(x.len(), dir).apply(&x).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (h, y, snr_db, mode = "lmmse"))]
fn detect_digital(h: Vec<Vec<Complex64>>, y: Vec<Complex64>, snr_db: f64, mode: &str) -> PyResult<Vec<Complex64>> {
    let mode = detect_mode(mode)?;
    mimo::detect_digital(&complex_matrix(h)?, &y, snr_db, mode).map_err(to_py)
}

/// Programs a detector bank for `h` and runs one analog detection of `y`.
#[pyfunction]
#[pyo3(signature = (h, y, snr_db, mode = "lmmse", scheme = "with_verification", device = None, averaging = 1, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn detect_crossbar(
    h: Vec<Vec<Complex64>>,
    y: Vec<Complex64>,
    snr_db: f64,
    mode: &str,
    scheme: &str,
    device: Option<&DeviceModel>,
    averaging: usize,
    seed: u64,
) -> PyResult<Vec<Complex64>> {
    let mode = detect_mode(mode)?;
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let model = device.map_or_else(|| DevicePreset::TaTaoxPt.model(), |d| d.inner.clone());
    let h = complex_matrix(h)?;
    let mut r = rng::seeded(seed);
    let (bank, _) = mimo::build_detector_bank(
        &h,
        std::f64::consts::FRAC_1_SQRT_2,
        snr_db,
        mode,
        &model,
        scheme,
        &Default::default(),
        averaging,
        &mut r,
    )
    .map_err(to_py)?;
    mimo::detect_crossbar(&bank, &y, &mut r).map_err(to_py)
}

/// Digital baseline `(latency_s, energy_j)` for the configured frame.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn digital_cost(config: Option<&Config>) -> PyResult<(f64, f64)> {
    let frame = config.map_or_else(Default::default, |c| c.inner.frame.clone());
    let c = pipeline::digital_cost(&Workload::from(&frame), &pipeline::ProcessorProfile::combined_65nm()).map_err(to_py)?;
    Ok((c.latency(), c.energy()))
}

#[pymodule]
fn rram_baseband_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DeviceModel>()?;
    m.add_class::<Config>()?;
    m.add_class::<Transceiver>()?;
    m.add_function(wrap_pyfunction!(run_frame, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_snr, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_antennas, m)?)?;
    m.add_function(wrap_pyfunction!(latency_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mc_write_latency, m)?)?;
    m.add_function(wrap_pyfunction!(program_trace, m)?)?;
    m.add_function(wrap_pyfunction!(real_map_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(real_map_vector, m)?)?;
    m.add_function(wrap_pyfunction!(unmap_vector, m)?)?;
    m.add_function(wrap_pyfunction!(gray_encode, m)?)?;
    m.add_function(wrap_pyfunction!(gray_decode, m)?)?;
    m.add_function(wrap_pyfunction!(qam16_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(qam16_demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(dft, m)?)?;
    m.add_function(wrap_pyfunction!(detect_digital, m)?)?;
    m.add_function(wrap_pyfunction!(detect_crossbar, m)?)?;
    m.add_function(wrap_pyfunction!(digital_cost, m)?)?;
    Ok(())
}
