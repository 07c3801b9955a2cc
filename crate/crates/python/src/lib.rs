//! Python bindings: potentials, regions, complex times, clock and dwell runs,
//! amplitude distributions, the ionisation model and the named experiments.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tunneltime::clock::{default_omega_grid, dwell_probe_state, two_j_from, ClockExperiment, Postselector, SpinState};
use tunneltime::ctime::{self, two_path_time_exact, MomentumDistribution, Selection, WavepacketTimes};
use tunneltime::evolve::{Propagator, Wavefunction};
use tunneltime::experiments::{self, Fidelity, CATALOG};
use tunneltime::ionise::{Ionisation, IonisationModel};
use tunneltime::taudist::{self, stationary_amplitude, Channel, Window};
use tunneltime::{Error, ErrorCategory, PotentialSpec, Region, SpatialGrid};

create_exception!(pytunneltime, NumericalError, PyException, "Numerical inconsistency or a domain too small.");
create_exception!(pytunneltime, PostSelectionError, PyException, "The requested channel carries no probability.");

fn py_err(e: Error) -> PyErr {
    match e.category() {
        ErrorCategory::Schema => PyValueError::new_err(e.to_string()),
        ErrorCategory::Numerical => NumericalError::new_err(e.to_string()),
        ErrorCategory::PostSelection => PostSelectionError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for tunneltime::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_python(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (v.to_string(),))?.unbind())
}

/// Piecewise-constant potential, optionally with a time schedule.
#[pyclass(module = "pytunneltime")]
struct Potential {
    inner: PotentialSpec,
}

#[pymethods]
impl Potential {
    /// Rectangular barrier of height `v0` on [0, d].
    #[staticmethod]
    fn barrier(v0: f64, d: f64) -> PyResult<Self> {
        Ok(Potential { inner: PotentialSpec::barrier(v0, d).py()? })
    }

    /// Step of height `v0` at x = 0.
    #[staticmethod]
    fn step(v0: f64) -> PyResult<Self> {
        Ok(Potential { inner: PotentialSpec::step(v0).py()? })
    }

    #[staticmethod]
    fn zero() -> Self {
        Potential { inner: PotentialSpec::zero() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: PotentialSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().py()?;
        Ok(Potential { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("potential serialises")
    }

    fn height_at(&self, x: f64, t: f64) -> PyResult<f64> {
        self.inner.height_at(x, t).py()
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.to_json())
    }
}

/// Region of interest Ω = [a, b].
#[pyclass(module = "pytunneltime", name = "Region")]
struct Interval {
    inner: Region,
}

#[pymethods]
impl Interval {
    #[new]
    fn new(a: f64, b: f64) -> PyResult<Self> {
        Ok(Interval { inner: Region::new(a, b).py()? })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    fn __repr__(&self) -> String {
        format!("Region({}, {})", self.inner.a, self.inner.b)
    }
}

/// `(T, R)` for `V + λΘ_Ω` at momentum `p`.
#[pyfunction]
#[pyo3(signature = (potential, region, p, lam = 0.0, mass = 1.0))]
fn scatter(potential: &Potential, region: &Interval, p: f64, lam: f64, mass: f64) -> PyResult<(Complex64, Complex64)> {
    let s = tunneltime::scattering_amplitudes(&potential.inner, &region.inner, lam, p, mass).py()?;
    Ok((s.t, s.r))
}

/// Complex tunnelling and reflection times, dwell time and SWP(all) time at momentum `p`.
#[pyfunction]
#[pyo3(signature = (potential, region, p, mass = 1.0))]
fn complex_times<'py>(py: Python<'py>, potential: &Potential, region: &Interval, p: f64, mass: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = ctime::time_row(&potential.inner, &region.inner, p, mass).py()?;
    let d = PyDict::new(py);
    d.set_item("p", r.p)?;
    d.set_item("tau_tunn", r.tau_tunn)?;
    d.set_item("tau_refl", r.tau_refl)?;
    d.set_item("tau_dwell", r.tau_dwell)?;
    d.set_item("t_swp_all", r.t_swp_all)?;
    Ok(d)
}

/// SWP and dwell times for a Gaussian momentum distribution.
#[pyfunction]
#[pyo3(signature = (potential, region, p0, sigma_p, mass = 1.0))]
fn wavepacket_times<'py>(
    py: Python<'py>,
    potential: &Potential,
    region: &Interval,
    p0: f64,
    sigma_p: f64,
    mass: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let a = MomentumDistribution::gaussian(p0, sigma_p).py()?;
    let w = WavepacketTimes::compute(&a, &potential.inner, &region.inner, mass).py()?;
    let d = PyDict::new(py);
    d.set_item("w_tunn", w.w_tunn)?;
    d.set_item("w_refl", w.w_refl)?;
    d.set_item("tau_dwell", w.dwell)?;
    d.set_item("t_swp_tunn", w.swp(Selection::Tunn).ok())?;
    d.set_item("t_swp_refl", w.swp(Selection::Refl).ok())?;
    d.set_item("t_swp_all", w.swp(Selection::All).ok())?;
    Ok(d)
}

/// Clock reading for two interfering paths; arguments are decimal strings or numbers.
#[pyfunction]
fn two_path_time(a1: &Bound<'_, PyAny>, tau1: &Bound<'_, PyAny>, a2: &Bound<'_, PyAny>, tau2: &Bound<'_, PyAny>) -> PyResult<f64> {
    let s = |v: &Bound<'_, PyAny>| -> PyResult<String> { Ok(v.str()?.to_string()) };
    let (n, d) = two_path_time_exact(&s(a1)?, &s(tau1)?, &s(a2)?, &s(tau2)?).py()?;
    Ok(n as f64 / d as f64)
}

fn packet_setup(
    potential: &Potential,
    region: &Interval,
    packet: (f64, f64, f64),
    grid: (f64, f64, usize),
    duration: f64,
    dt: Option<f64>,
    mass: f64,
) -> PyResult<(Propagator, Wavefunction)> {
    let g = SpatialGrid::new(grid.0, grid.1, grid.2).py()?;
    let psi = Wavefunction::gaussian(g, packet.0, packet.1, packet.2).py()?;
    let prop = match dt {
        Some(dt) => Propagator::with_dt(g, &potential.inner, &region.inner, 0.0, duration, mass, dt),
        None => Propagator::new(g, &potential.inner, &region.inner, 0.0, duration, mass),
    }
    .py()?;
    Ok((prop, psi))
}

/// Stopwatch, operator-form and SWP(all) dwell quantities for a Gaussian packet.
#[pyfunction]
#[pyo3(signature = (potential, region, packet, grid, duration, dt = None, mass = 1.0))]
#[allow(clippy::too_many_arguments)]
fn dwell_times<'py>(
    py: Python<'py>,
    potential: &Potential,
    region: &Interval,
    packet: (f64, f64, f64),
    grid: (f64, f64, usize),
    duration: f64,
    dt: Option<f64>,
    mass: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (prop, psi) = packet_setup(potential, region, packet, grid, duration, dt, mass)?;
    let (sw, op, swp) = py
        .detach(|| -> tunneltime::Result<_> {
            Ok((prop.dwell_time_stopwatch(&psi)?, prop.dwell_time_operator(&psi)?, prop.swp_all_operator_form(&psi)?))
        })
        .py()?;
    let d = PyDict::new(py);
    d.set_item("stopwatch", sw)?;
    d.set_item("operator", op)?;
    d.set_item("swp_all", swp)?;
    Ok(d)
}

/// Weak-coupling limit of the simulated spin-j clock.
///
/// `select` is "all", "transmitted" or "reflected"; `dwell_probe` reads the
/// dwell time instead (requires "all").
#[pyfunction]
#[pyo3(signature = (potential, region, packet, grid, duration, j = 1.0, select = "all", dwell_probe = false, dt = None, mass = 1.0))]
#[allow(clippy::too_many_arguments)]
fn clock<'py>(
    py: Python<'py>,
    potential: &Potential,
    region: &Interval,
    packet: (f64, f64, f64),
    grid: (f64, f64, usize),
    duration: f64,
    j: f64,
    select: &str,
    dwell_probe: bool,
    dt: Option<f64>,
    mass: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (prop, psi) = packet_setup(potential, region, packet, grid, duration, dt, mass)?;
    let two_j = two_j_from(j).py()?;
    let sel = match select {
        "all" => Postselector::All,
        "transmitted" => Postselector::transmitted_beyond(&region.inner, 3.0),
        "reflected" => Postselector::reflected_before(&region.inner, 3.0),
        other => return Err(PyValueError::new_err(format!("unknown selection {other:?}"))),
    };
    let gamma = if dwell_probe { dwell_probe_state(two_j) } else { SpinState::rotated(two_j, 0.0) }.py()?;
    let omegas = default_omega_grid(two_j, duration, 3);
    let wl = py
        .detach(|| -> tunneltime::Result<_> {
            let exp = ClockExperiment::new(prop, psi, gamma, sel)?;
            if dwell_probe {
                exp.dwell_probe(&omegas)
            } else {
                exp.weak_limit(&omegas)
            }
        })
        .py()?;
    let d = PyDict::new(py);
    d.set_item("value", wl.value)?;
    d.set_item("err_est", wl.err_est)?;
    d.set_item("slope", wl.slope)?;
    d.set_item("samples", wl.samples)?;
    Ok(d)
}

/// Amplitude distribution A(τ) of a stationary channel: `(tau, amplitudes, first_moment)`.
#[pyfunction]
#[pyo3(signature = (potential, region, p, channel = "transmitted", lambda_max = None, n_lambda = 1024, hann = true, mass = 1.0))]
#[allow(clippy::too_many_arguments)]
fn amplitude_distribution(
    potential: &Potential,
    region: &Interval,
    p: f64,
    channel: &str,
    lambda_max: Option<f64>,
    n_lambda: usize,
    hann: bool,
    mass: f64,
) -> PyResult<(Vec<f64>, Vec<Complex64>, Complex64)> {
    let channel = match channel {
        "transmitted" => Channel::Transmitted,
        "reflected" => Channel::Reflected,
        other => return Err(PyValueError::new_err(format!("unknown channel {other:?}"))),
    };
    let lm = lambda_max.unwrap_or_else(|| taudist::default_lambda_max(mass * region.inner.width() / p));
    let window = if hann { Window::Hann } else { Window::None };
    let d = stationary_amplitude(&potential.inner, &region.inner, p, mass, channel, lm, n_lambda, window).py()?;
    let m1 = d.moment(1).py()?;
    Ok((d.tau_grid, d.amplitudes, m1))
}

/// Tunnel ionisation summary; `model` is a JSON string, the default fixture when absent.
#[pyfunction]
#[pyo3(signature = (model = None, smoke = false))]
fn ionise(py: Python<'_>, model: Option<&str>, smoke: bool) -> PyResult<Py<PyAny>> {
    let m = match model {
        Some(text) => serde_json::from_str::<IonisationModel>(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => experiments::ionise_model(if smoke { Fidelity::Smoke } else { Fidelity::Full }),
    };
    let summary = py.detach(|| Ionisation::new(m).and_then(|ion| ion.times(None)).map(|t| t.summary_json())).py()?;
    to_python(py, &summary)
}

/// The default ionisation model as a JSON string.
#[pyfunction]
fn default_ionisation_model() -> String {
    serde_json::to_string_pretty(&IonisationModel::default_fixture()).expect("model serialises")
}

/// Names and descriptions of the acceptance experiments.
#[pyfunction]
fn presets() -> Vec<(String, String)> {
    CATALOG.iter().map(|c| (c.1.to_string(), c.2.to_string())).collect()
}

/// Runs a named experiment; returns its checks and values.
#[pyfunction]
#[pyo3(signature = (name, smoke = false, seed = 1))]
fn run_preset(py: Python<'_>, name: &str, smoke: bool, seed: u64) -> PyResult<Py<PyAny>> {
    let id = experiments::preset_id(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?;
    let fidelity = if smoke { Fidelity::Smoke } else { Fidelity::Full };
    let outcome = py.detach(|| experiments::run(id, fidelity, seed)).py()?;
    to_python(py, &serde_json::to_value(&outcome).expect("outcome serialises"))
}

#[pymodule]
fn pytunneltime(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Potential>()?;
    m.add_class::<Interval>()?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("PostSelectionError", m.py().get_type::<PostSelectionError>())?;
    m.add_function(wrap_pyfunction!(scatter, m)?)?;
    m.add_function(wrap_pyfunction!(complex_times, m)?)?;
    m.add_function(wrap_pyfunction!(wavepacket_times, m)?)?;
    m.add_function(wrap_pyfunction!(two_path_time, m)?)?;
    m.add_function(wrap_pyfunction!(dwell_times, m)?)?;
    m.add_function(wrap_pyfunction!(clock, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(ionise, m)?)?;
    m.add_function(wrap_pyfunction!(default_ionisation_model, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    Ok(())
}
