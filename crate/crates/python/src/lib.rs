//! Python bindings for `qkdlab`.
//!
//! Presets are exposed as a class; result structs come back as plain dicts.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qkdlab::decoy::parse_observations;
use qkdlab::preset::parse_config;
use qkdlab::sweep::csv_string;
use qkdlab::{
    ConditionalYields, DecoyObservation, DetectionStats, EcEfficiencyTable, EcMode, ExperimentPreset,
    LinkEfficiencies, MuPolicy, OptimizationResult, Protocol, QkdError, RateResult, SweepCommand, SweepRange,
    SweepSpec, TaggedClass, YieldEstimate,
};

create_exception!(pyqkdlab, QkdlabError, PyException);

fn to_py(err: QkdError) -> PyErr {
    match err {
        QkdError::Config(_) | QkdError::Misuse(_) => PyValueError::new_err(err.to_string()),
        other => QkdlabError::new_err(other.to_string()),
    }
}

fn table(mode: &str) -> PyResult<EcEfficiencyTable> {
    let mode: EcMode = mode.parse().map_err(to_py)?;
    Ok(EcEfficiencyTable::builtin().with_mode(mode))
}

fn protocol(name: &str) -> PyResult<Protocol> {
    name.parse().map_err(to_py)
}

#[pyclass(name = "Preset", module = "pyqkdlab", from_py_object)]
#[derive(Clone)]
struct PyPreset {
    inner: ExperimentPreset,
}

#[pymethods]
impl PyPreset {
    /// Built-in preset by name: T8, G13, KTH or GYS.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        ExperimentPreset::builtin(name)
            .map(|inner| PyPreset { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
    }

    /// Parses key=value config text, optionally on top of this preset.
    #[staticmethod]
    #[pyo3(signature = (text, base=None))]
    fn from_config(text: &str, base: Option<PyRef<'_, PyPreset>>) -> PyResult<Self> {
        let base = base.map(|b| b.inner.clone());
        parse_config(text, base).map(|inner| PyPreset { inner }).map_err(to_py)
    }

    fn to_config(&self) -> String {
        self.inner.to_config_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn e_detector(&self) -> f64 {
        self.inner.e_detector
    }
    #[getter]
    fn d_b(&self) -> f64 {
        self.inner.d_b
    }
    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }
    #[getter]
    fn eta_bob(&self) -> f64 {
        self.inner.eta_bob()
    }
    #[getter]
    fn p_dark(&self) -> f64 {
        self.inner.p_dark()
    }

    fn __repr__(&self) -> String {
        format!("Preset({:?})", self.inner.name)
    }
}

fn link_dict<'py>(py: Python<'py>, l: &LinkEfficiencies) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t_ab", l.t_ab)?;
    d.set_item("eta_bob", l.eta_bob)?;
    d.set_item("eta", l.eta)?;
    d.set_item("p_dark", l.p_dark)?;
    Ok(d)
}

fn stats_dict<'py>(py: Python<'py>, s: &DetectionStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("p_signal", s.p_signal)?;
    d.set_item("p_s", s.p_s)?;
    d.set_item("p_m", s.p_m)?;
    d.set_item("s_m", s.s_m)?;
    d.set_item("p_d", s.p_d)?;
    d.set_item("delta", s.delta)?;
    d.set_item("delta_s", s.delta_s)?;
    d.set_item("delta_m", s.delta_m)?;
    d.set_item("f1_decoy", s.f1_decoy)?;
    d.set_item("f1_pessimistic", s.f1_pessimistic)?;
    Ok(d)
}

fn yields_dict<'py>(py: Python<'py>, y: &ConditionalYields) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("p_dark_t", y.p_dark_t)?;
    d.set_item("p_s_t", y.p_s_t)?;
    d.set_item("p_m_t", y.p_m_t)?;
    d.set_item("delta_s_t", y.delta_s_t)?;
    d.set_item("delta_m_t", y.delta_m_t)?;
    Ok(d)
}

fn rate_dict<'py>(py: Python<'py>, r: &RateResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("protocol", r.protocol.as_str())?;
    d.set_item("eta_post", r.eta_post)?;
    d.set_item("r", r.r)?;
    d.set_item("b", r.b)?;
    d.set_item("untagged_fraction", r.untagged_fraction)?;
    d.set_item("q", r.q)?;
    d.set_item("mu", r.mu)?;
    d.set_item("distance", r.distance)?;
    d.set_item("link", link_dict(py, &r.link)?)?;
    d.set_item("stats", stats_dict(py, &r.stats)?)?;
    match &r.yields {
        Some(y) => d.set_item("yields", yields_dict(py, y)?)?,
        None => d.set_item("yields", py.None())?,
    }
    Ok(d)
}

fn opt_dict<'py>(py: Python<'py>, o: &OptimizationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("argmax", o.argmax)?;
    d.set_item("value", o.value)?;
    d.set_item("iterations", o.iterations)?;
    d.set_item("bracket", o.bracket)?;
    d.set_item("converged", o.converged)?;
    Ok(d)
}

fn estimate_dict<'py>(py: Python<'py>, e: &YieldEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("eta", e.eta.clone())?;
    d.set_item("p_dark_est", e.p_dark_est)?;
    d.set_item("p_s_tilde", e.p_s_tilde)?;
    d.set_item("delta_s_tilde", e.delta_s_tilde)?;
    d.set_item("single_photon_error", e.single_photon_error)?;
    d.set_item("clamped", e.clamped)?;
    d.set_item("condition_estimate", e.condition_estimate)?;
    d.set_item("condition_warning", e.condition_warning.clone())?;
    Ok(d)
}

fn observations(obs: Vec<(f64, f64, f64)>) -> Vec<DecoyObservation> {
    obs.into_iter().map(|(mu, p, d)| DecoyObservation::new(mu, p, d)).collect()
}

#[pyfunction]
fn link_efficiency<'py>(py: Python<'py>, preset: &PyPreset, distance: f64) -> PyResult<Bound<'py, PyDict>> {
    let link = qkdlab::link_efficiency(&preset.inner, distance).map_err(to_py)?;
    link_dict(py, &link)
}

#[pyfunction]
fn detection_stats<'py>(py: Python<'py>, preset: &PyPreset, distance: f64, mu: f64) -> PyResult<Bound<'py, PyDict>> {
    let link = qkdlab::link_efficiency(&preset.inner, distance).map_err(to_py)?;
    let stats = qkdlab::detection_stats(&link, mu, preset.inner.e_detector).map_err(to_py)?;
    stats_dict(py, &stats)
}

#[pyfunction]
fn binary_entropy(x: f64) -> PyResult<f64> {
    qkdlab::binary_entropy(x).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (delta, ec_mode="interpolate"))]
fn ec_efficiency(delta: f64, ec_mode: &str) -> PyResult<f64> {
    table(ec_mode)?.ec_efficiency(delta).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (delta, f1, ec_mode="interpolate"))]
fn residue_lutkenhaus(delta: f64, f1: f64, ec_mode: &str) -> PyResult<f64> {
    qkdlab::residue_lutkenhaus(delta, f1, &table(ec_mode)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (delta, f1, ec_mode="interpolate"))]
fn residue_gllp(delta: f64, f1: f64, ec_mode: &str) -> PyResult<f64> {
    qkdlab::residue_gllp(delta, f1, &table(ec_mode)?).map_err(to_py)
}

/// `classes` is a list of `(probability_fraction, phase_error)` pairs.
#[pyfunction]
#[pyo3(signature = (delta_b, classes, ec_mode="interpolate"))]
fn residue_tagged_general(delta_b: f64, classes: Vec<(f64, f64)>, ec_mode: &str) -> PyResult<f64> {
    let classes: Vec<TaggedClass> = classes.into_iter().map(|(p, e)| TaggedClass::new(p, e)).collect();
    qkdlab::residue_tagged_general(delta_b, &classes, &table(ec_mode)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (protocol_name, preset, distance, mu, ec_mode="interpolate"))]
fn rate<'py>(
    py: Python<'py>,
    protocol_name: &str,
    preset: &PyPreset,
    distance: f64,
    mu: f64,
    ec_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let result = qkdlab::rate_for_protocol(protocol(protocol_name)?, &preset.inner, distance, mu, &table(ec_mode)?)
        .map_err(to_py)?;
    rate_dict(py, &result)
}

#[pyfunction]
#[pyo3(signature = (protocol_name, preset, distance, bracket=(1e-7, 1.0), tol=1e-9, ec_mode="interpolate"))]
fn optimal_mu<'py>(
    py: Python<'py>,
    protocol_name: &str,
    preset: &PyPreset,
    distance: f64,
    bracket: (f64, f64),
    tol: f64,
    ec_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let opt = qkdlab::maximize_rate_over_mu(
        protocol(protocol_name)?,
        &preset.inner,
        distance,
        bracket,
        tol,
        &table(ec_mode)?,
    )
    .map_err(to_py)?;
    opt_dict(py, &opt)
}

#[pyfunction]
fn optimal_mu_no_decoy_approx(eta: f64) -> PyResult<f64> {
    qkdlab::optimal_mu_no_decoy_approx(eta).map_err(to_py)
}

#[pyfunction]
fn optimal_mu_decoy_approx(e_detector: f64) -> PyResult<f64> {
    qkdlab::optimal_mu_decoy_approx(e_detector).map_err(to_py)
}

/// `mu` is a number, "optimal" or "eta".
#[pyfunction]
#[pyo3(signature = (protocol_name, preset, mu="optimal", threshold=0.0, ec_mode="interpolate"))]
fn cutoff_distance<'py>(
    py: Python<'py>,
    protocol_name: &str,
    preset: &PyPreset,
    mu: &str,
    threshold: f64,
    ec_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let policy: MuPolicy = mu.parse().map_err(to_py)?;
    let opt = qkdlab::cutoff_distance(protocol(protocol_name)?, &preset.inner, policy, threshold, &table(ec_mode)?)
        .map_err(to_py)?;
    opt_dict(py, &opt)
}

/// Returns `(mu, p_d, delta)` triples.
#[pyfunction]
fn simulate_decoy(preset: &PyPreset, distance: f64, mus: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let obs = qkdlab::simulate_decoy_observations(&preset.inner, distance, &mus).map_err(to_py)?;
    Ok(obs.iter().map(|o| (o.mu, o.p_d_observed, o.delta_observed)).collect())
}

#[pyfunction]
fn weak_decoy_estimate<'py>(
    py: Python<'py>,
    observation: (f64, f64, f64),
    p_dark: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (mu, p, d) = observation;
    let est = qkdlab::weak_decoy_estimate(&DecoyObservation::new(mu, p, d), p_dark).map_err(to_py)?;
    estimate_dict(py, &est)
}

#[pyfunction]
fn multi_decoy_solve<'py>(
    py: Python<'py>,
    observations_list: Vec<(f64, f64, f64)>,
    p_dark: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let est = qkdlab::multi_decoy_solve(&observations(observations_list), p_dark).map_err(to_py)?;
    estimate_dict(py, &est)
}

/// Returns `(pass, p_d_residual, delta_residual)`.
#[pyfunction]
#[pyo3(signature = (preset, observation, tolerance=0.05))]
fn vacuum_check(preset: &PyPreset, observation: (f64, f64, f64), tolerance: f64) -> PyResult<(bool, f64, f64)> {
    let (mu, p, d) = observation;
    let check = qkdlab::vacuum_consistency_check(&DecoyObservation::new(mu, p, d), &preset.inner, tolerance)
        .map_err(to_py)?;
    Ok((check.pass, check.p_d_residual, check.delta_residual))
}

/// Runs one sweep command and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (
    command, preset, protocols=None, range=None, linear=false, mu=None, distance=0.0,
    threshold=0.0, ec_mode="interpolate", observations_text=None, vacuum_tolerance=0.05
))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    command: &str,
    preset: &PyPreset,
    protocols: Option<Vec<String>>,
    range: Option<&str>,
    linear: bool,
    mu: Option<&str>,
    distance: f64,
    threshold: f64,
    ec_mode: &str,
    observations_text: Option<&str>,
    vacuum_tolerance: f64,
) -> PyResult<String> {
    let command: SweepCommand = command.parse().map_err(to_py)?;
    let mut spec = SweepSpec::new(command);
    if let Some(list) = protocols {
        spec.protocols = list.iter().map(|p| protocol(p)).collect::<PyResult<_>>()?;
    }
    if let Some(range) = range {
        spec.range = range.parse::<SweepRange>().map_err(to_py)?;
    }
    if linear {
        spec.log_grid = false;
    }
    if let Some(mu) = mu {
        spec.mu_policy = mu.parse().map_err(to_py)?;
    }
    spec.distance = distance;
    spec.threshold = threshold;
    spec.vacuum_tolerance = vacuum_tolerance;
    spec.ec_table = table(ec_mode)?;
    if let Some(text) = observations_text {
        spec.observations = parse_observations(text).map_err(to_py)?;
    }
    let output = qkdlab::run_sweep(&spec, &preset.inner).map_err(to_py)?;
    Ok(csv_string(&output, ','))
}

#[pymodule]
fn pyqkdlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QkdlabError", m.py().get_type::<QkdlabError>())?;
    m.add("PRESETS", qkdlab::preset::BUILTIN_PRESETS.to_vec())?;
    m.add_class::<PyPreset>()?;
    m.add_function(wrap_pyfunction!(link_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(detection_stats, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(ec_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(residue_lutkenhaus, m)?)?;
    m.add_function(wrap_pyfunction!(residue_gllp, m)?)?;
    m.add_function(wrap_pyfunction!(residue_tagged_general, m)?)?;
    m.add_function(wrap_pyfunction!(rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mu, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mu_no_decoy_approx, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mu_decoy_approx, m)?)?;
    m.add_function(wrap_pyfunction!(cutoff_distance, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_decoy, m)?)?;
    m.add_function(wrap_pyfunction!(weak_decoy_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(multi_decoy_solve, m)?)?;
    m.add_function(wrap_pyfunction!(vacuum_check, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
