//! Python bindings: spectra, derivative tables, continued fractions, the
//! transport solver and its verification.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kompsep::contfrac::{cf_coefficients, find_defects, select_approximant, taylor_eval};
use kompsep::moments::{theta_derivatives, theta_derivatives_general};
use kompsep::pde::{solve_transport_with, SolverOptions};
use kompsep::spectra::equilibrium_temperature;
use kompsep::verify::{equilibrium_distance, moment_ode_check, self_consistency};
use kompsep::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_)
        | Error::InvalidSpectrum(_)
        | Error::InvalidGrid(_)
        | Error::UnsupportedParams(_)
        | Error::TruncationTooLarge { .. }
        | Error::DivergentMoment { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(frozen, skip_from_py_object, module = "pykompsep")]
#[derive(Clone)]
struct Params(kompsep::TransportParams);

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (i=2, j=2, k=2, alpha=4))]
    fn new(i: i64, j: i64, k: i64, alpha: i64) -> PyResult<Self> {
        kompsep::TransportParams::from_integers(i, j, k, alpha).map(Self).map_err(py_err)
    }

    fn is_comptonization(&self) -> bool {
        self.0.is_comptonization()
    }

    fn __repr__(&self) -> String {
        format!("Params({})", self.0)
    }
}

#[pyclass(frozen, skip_from_py_object, module = "pykompsep")]
#[derive(Clone)]
struct Spectrum(kompsep::InitialSpectrum);

#[pymethods]
impl Spectrum {
    #[staticmethod]
    fn bremsstrahlung() -> Self {
        Self(kompsep::InitialSpectrum::Bremsstrahlung)
    }

    #[staticmethod]
    #[pyo3(signature = (x0=4.0, n0=1.0))]
    fn monoenergetic(x0: f64, n0: f64) -> PyResult<Self> {
        kompsep::InitialSpectrum::monoenergetic(x0, n0).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (mean, variance, n0=1.0))]
    fn gaussian(mean: f64, variance: f64, n0: f64) -> PyResult<Self> {
        kompsep::InitialSpectrum::gaussian_pulse(mean, variance, n0).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn tabulated(x: Vec<f64>, f: Vec<f64>) -> PyResult<Self> {
        kompsep::InitialSpectrum::tabulated(x, f).map(Self).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn density(&self, x: f64) -> Option<f64> {
        self.0.density(x)
    }

    /// I_n(0) = ∫ xⁿ f₀ dx.
    fn moment(&self, n: f64) -> PyResult<f64> {
        self.0.initial_moment_real(n).map_err(py_err)
    }

    /// Equilibrium temperature for the Comptonization parameters, if meaningful.
    fn theta_eq(&self) -> Option<f64> {
        equilibrium_temperature(&self.0, &kompsep::TransportParams::comptonization())
            .ok()
            .filter(|e| e.steady_state == kompsep::spectra::SteadyState::Meaningful)
            .map(|e| e.theta_eq)
    }

    fn __repr__(&self) -> String {
        format!("Spectrum({:?})", self.0)
    }
}

#[pyclass(frozen, module = "pykompsep")]
struct DerivativeTable(Arc<kompsep::DerivativeTable>);

#[pymethods]
impl DerivativeTable {
    #[getter]
    fn order(&self) -> usize {
        self.0.order()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// Exact rationals as strings, or None for a floating-point table.
    #[getter]
    fn exact(&self) -> Option<Vec<String>> {
        self.0.exact().map(|v| v.iter().map(|r| r.to_string()).collect())
    }

    /// Taylor partial sum Φ_n(y).
    fn taylor(&self, n: usize, y: f64) -> PyResult<f64> {
        taylor_eval(&self.0, n, y).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json().to_string()
    }

    fn __len__(&self) -> usize {
        self.0.order() + 1
    }
}

#[pyclass(frozen, module = "pykompsep")]
struct ContinuedFraction(Arc<kompsep::ContinuedFraction>);

#[pymethods]
impl ContinuedFraction {
    #[getter]
    fn level(&self) -> usize {
        self.0.level()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    #[getter]
    fn exact(&self) -> Option<Vec<String>> {
        self.0.exact().map(|v| v.iter().map(|r| r.to_string()).collect())
    }

    /// Ψ_n(y).
    fn eval(&self, n: usize, y: f64) -> PyResult<f64> {
        self.0.eval(n, y).map_err(py_err)
    }

    /// Positive real poles of Ψ_n on (0, y_max] as (y, multiplicity) pairs.
    #[pyo3(signature = (n, y_max=2.0))]
    fn defects(&self, n: usize, y_max: f64) -> PyResult<Vec<(f64, usize)>> {
        let rf = self.0.to_rational(n).map_err(py_err)?;
        Ok(find_defects(&rf, y_max).defects.iter().map(|d| (d.y, d.multiplicity)).collect())
    }

    /// Highest admissible level on (0, y_max].
    #[pyo3(signature = (y_max=2.0, theta_eq=None))]
    fn select(&self, y_max: f64, theta_eq: Option<f64>) -> usize {
        select_approximant(&self.0, y_max, theta_eq).level
    }
}

#[pyclass(frozen, module = "pykompsep")]
struct Solution {
    sol: kompsep::PdeSolution,
    theta: kompsep::TemperatureFn,
}

#[pymethods]
impl Solution {
    #[getter]
    fn centers(&self) -> Vec<f64> {
        self.sol.grid.centers().to_vec()
    }

    #[getter]
    fn snapshot_times(&self) -> Vec<f64> {
        self.sol.snapshots.iter().map(|s| s.y).collect()
    }

    /// Cell values of F = xⁱf at snapshot time y.
    fn cells(&self, y: f64) -> PyResult<Vec<f64>> {
        Ok(self.sol.snapshot(y).map_err(py_err)?.f_cells.clone())
    }

    fn moment(&self, y: f64, n: f64) -> PyResult<f64> {
        self.sol.moment(y, n).map_err(py_err)
    }

    /// (x, G) with G = x³f.
    fn photon_spectrum(&self, y: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let ps = self.sol.photon_spectrum(y).map_err(py_err)?;
        Ok((ps.x, ps.g))
    }

    /// (y, θ) at every accepted step.
    fn theta_trace(&self) -> Vec<(f64, f64)> {
        self.sol.trace.iter().map(|t| (t.y, t.theta)).collect()
    }

    fn equilibrium_distance(&self, y: f64, theta_eq: f64) -> PyResult<f64> {
        equilibrium_distance(&self.sol, y, theta_eq).map_err(py_err)
    }

    /// Self-consistency report as a dict.
    #[pyo3(signature = (tolerance=0.02))]
    fn verify(&self, py: Python<'_>, tolerance: f64) -> PyResult<Py<PyAny>> {
        let rep = self_consistency(&self.sol, &self.theta, tolerance).map_err(py_err)?;
        json_to_py(py, &rep)
    }

    /// Moment-hierarchy check for n ∈ orders as a dict.
    #[pyo3(signature = (orders=vec![3.0, 4.0, 5.0], tolerance=0.03))]
    fn moment_ode(&self, py: Python<'_>, orders: Vec<f64>, tolerance: f64) -> PyResult<Py<PyAny>> {
        let rep = moment_ode_check(&self.sol, &orders, tolerance).map_err(py_err)?;
        json_to_py(py, &rep)
    }

    fn export(&self, dir: &str) -> PyResult<()> {
        self.sol.export(dir, None).map_err(py_err)
    }
}

/// θ⁽ⁿ⁾(0) for n = 0…order.
#[pyfunction]
#[pyo3(signature = (spectrum, order=24, params=None, route="auto"))]
fn theta_derivatives_py(
    py: Python<'_>,
    spectrum: &Spectrum,
    order: usize,
    params: Option<&Params>,
    route: &str,
) -> PyResult<DerivativeTable> {
    let p = params.map(|p| p.0).unwrap_or_else(kompsep::TransportParams::comptonization);
    let s = spectrum.0.clone();
    let table = py.detach(move || match route {
        "auto" => theta_derivatives(&p, &s, order),
        "general" => theta_derivatives_general(&p, &s, order),
        other => Err(Error::InvalidParams(format!("route must be auto or general, got {other}"))),
    });
    table.map(|t| DerivativeTable(Arc::new(t))).map_err(py_err)
}

#[pyfunction]
fn continued_fraction(table: &DerivativeTable) -> PyResult<ContinuedFraction> {
    cf_coefficients(&table.0).map(|c| ContinuedFraction(Arc::new(c))).map_err(py_err)
}

/// Solve the transport equation with θ(y) taken from `cf` at `level`, or a
/// constant `theta`.
#[pyfunction]
#[pyo3(signature = (
    spectrum, cf=None, level=None, theta=None, params=None,
    x_min=1e-3, x_max=50.0, cells=400, y_max=2.0, snapshots=21, rtol=1e-6,
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    spectrum: &Spectrum,
    cf: Option<&ContinuedFraction>,
    level: Option<usize>,
    theta: Option<f64>,
    params: Option<&Params>,
    x_min: f64,
    x_max: f64,
    cells: usize,
    y_max: f64,
    snapshots: usize,
    rtol: f64,
) -> PyResult<Solution> {
    let p = params.map(|p| p.0).unwrap_or_else(kompsep::TransportParams::comptonization);
    let temperature = match (cf, theta) {
        (Some(cf), None) => {
            let n = level.unwrap_or_else(|| select_approximant(&cf.0, y_max, None).level);
            kompsep::TemperatureFn::continued_fraction((*cf.0).clone(), n).map_err(py_err)?
        }
        (None, Some(v)) => kompsep::TemperatureFn::Constant(v),
        _ => return Err(PyValueError::new_err("pass exactly one of cf or theta")),
    };
    let grid = kompsep::Grid::log(x_min, x_max, cells, y_max, snapshots).map_err(py_err)?;
    let opts = SolverOptions { rtol, ..Default::default() };
    let s = spectrum.0.clone();
    let th = temperature.clone();
    let sol = py
        .detach(move || solve_transport_with(&p, &s, &th, &grid, &opts))
        .map_err(py_err)?;
    Ok(Solution { sol, theta: temperature })
}

#[pymodule]
fn pykompsep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Spectrum>()?;
    m.add_class::<DerivativeTable>()?;
    m.add_class::<ContinuedFraction>()?;
    m.add_class::<Solution>()?;
    m.add("theta_derivatives", wrap_pyfunction!(theta_derivatives_py, m)?)?;
    m.add_function(wrap_pyfunction!(continued_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    Ok(())
}
