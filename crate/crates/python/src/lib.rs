use std::path::PathBuf;

use everrod::calibration::{self, EversionPressureModel, PressureLaw};
use everrod::cli::{self as commands, CliError};
use everrod::designer::{design_bands, DesignError};
use everrod::domain::{self, DomainError};
use everrod::io::scenario::DesignDocument;
use everrod::lab::{self, CurveMetadata, ForceDisplacementCurve, LabError, SweepProtocol};
use everrod::solver::{self, SolverError};
use everrod::LoadCase;
use nalgebra::Vector3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn domain_err(e: DomainError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn solver_err(e: SolverError) -> PyErr {
    match e {
        SolverError::Domain(_) | SolverError::InvalidLoad(_) | SolverError::InvalidSettings(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn lab_err(e: LabError) -> PyErr {
    match e {
        LabError::Solver { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn settings(nodes: Option<usize>) -> solver::SolverSettings {
    let mut s = solver::SolverSettings::default();
    if let Some(n) = nodes {
        s.nodes = n;
    }
    s
}

/// One constrictive band: center distance from the tip (m) and diameter
/// reduction ratio.
#[pyclass(module = "everrod", name = "BandSpec", from_py_object)]
#[derive(Clone)]
struct PyBandSpec {
    inner: domain::BandSpec,
}

#[pymethods]
impl PyBandSpec {
    #[new]
    #[pyo3(signature = (distance_from_tip, reduction_ratio, width = domain::DEFAULT_BAND_WIDTH))]
    fn new(distance_from_tip: f64, reduction_ratio: f64, width: f64) -> Self {
        Self {
            inner: domain::BandSpec::new(distance_from_tip, reduction_ratio).with_width(width),
        }
    }

    #[getter]
    fn distance_from_tip(&self) -> f64 {
        self.inner.distance_from_tip
    }

    #[getter]
    fn reduction_ratio(&self) -> f64 {
        self.inner.reduction_ratio
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.width
    }

    fn __repr__(&self) -> String {
        format!(
            "BandSpec(distance_from_tip={}, reduction_ratio={}, width={})",
            self.inner.distance_from_tip, self.inner.reduction_ratio, self.inner.width
        )
    }
}

/// Rod geometry and operating pressure (SI units, pressure in kPa).
#[pyclass(module = "everrod", name = "RodSpec", from_py_object)]
#[derive(Clone)]
struct PyRodSpec {
    inner: domain::RodSpec,
}

#[pymethods]
impl PyRodSpec {
    #[new]
    #[pyo3(signature = (length = 0.6, base_radius = 0.02, wall_thickness = 5e-5, bands = Vec::new(), pressure_kpa = 6.9))]
    fn new(length: f64, base_radius: f64, wall_thickness: f64, bands: Vec<PyBandSpec>, pressure_kpa: f64) -> PyResult<Self> {
        let bands = bands.into_iter().map(|b| b.inner).collect();
        domain::RodSpec::new(length, base_radius, wall_thickness, bands, pressure_kpa * 1e3)
            .map(|inner| Self { inner })
            .map_err(domain_err)
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    #[getter]
    fn bands(&self) -> Vec<PyBandSpec> {
        self.inner.bands().iter().map(|&inner| PyBandSpec { inner }).collect()
    }

    /// Tube radius at arc length `s` from the base.
    fn radius_at(&self, s: f64) -> PyResult<f64> {
        domain::radius_profile(&self.inner, s).map_err(domain_err)
    }

    fn with_bands(&self, bands: Vec<PyBandSpec>) -> PyResult<Self> {
        self.inner
            .with_bands(bands.into_iter().map(|b| b.inner).collect())
            .map(|inner| Self { inner })
            .map_err(domain_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RodSpec(length={}, base_radius={}, wall_thickness={}, bands={}, pressure_kpa={})",
            self.inner.length(),
            self.inner.base_radius(),
            self.inner.wall_thickness(),
            self.inner.bands().len(),
            self.inner.pressure() / 1e3
        )
    }
}

/// Effective modulus table, Poisson ratio and band reduction factors.
#[pyclass(module = "everrod", name = "MaterialModel", from_py_object)]
#[derive(Clone)]
struct PyMaterialModel {
    inner: domain::MaterialModel,
}

#[pymethods]
impl PyMaterialModel {
    /// The calibrated reference material.
    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: domain::MaterialModel::reference(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("material serializes")
    }

    fn with_modulus(&self, modulus_pa: f64) -> PyResult<Self> {
        self.inner.with_modulus(modulus_pa).map(|inner| Self { inner }).map_err(domain_err)
    }

    fn with_alpha(&self, reduction_ratio: f64, alpha: f64) -> PyResult<Self> {
        self.inner
            .with_alpha(reduction_ratio, alpha)
            .map(|inner| Self { inner })
            .map_err(domain_err)
    }

    fn effective_modulus(&self, pressure_kpa: f64) -> PyResult<f64> {
        self.inner.effective_modulus_at(pressure_kpa * 1e3).map_err(domain_err)
    }

    fn alpha(&self, reduction_ratio: f64) -> PyResult<f64> {
        self.inner.alpha(reduction_ratio).map_err(domain_err)
    }
}

/// A converged static equilibrium.
#[pyclass(module = "everrod", name = "Equilibrium", frozen)]
struct PyEquilibrium {
    inner: solver::Equilibrium,
}

#[pymethods]
impl PyEquilibrium {
    #[getter]
    fn force(&self) -> f64 {
        self.inner.force
    }

    #[getter]
    fn displacement(&self) -> f64 {
        self.inner.displacement()
    }

    #[getter]
    fn tip(&self) -> (f64, f64, f64) {
        let t = self.inner.state.tip();
        (t.x, t.y, t.z)
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn stations(&self) -> Vec<f64> {
        self.inner.state.stations.clone()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64, f64)> {
        self.inner.state.positions.iter().map(|p| (p.x, p.y, p.z)).collect()
    }

    #[getter]
    fn max_orthonormality_error(&self) -> f64 {
        self.inner.state.max_orthonormality_error()
    }
}

fn load(rod: &PyRodSpec, station: Option<f64>, d: (f64, f64, f64)) -> (f64, Vector3<f64>) {
    (station.unwrap_or(rod.inner.length()), Vector3::new(d.0, d.1, d.2))
}

/// Force-controlled solve: `force` newtons along `direction` at `station`
/// (the tip by default).
#[pyfunction]
#[pyo3(signature = (rod, material, force, direction = (1.0, 0.0, 0.0), station = None, nodes = None))]
fn solve_point_load(
    rod: &PyRodSpec,
    material: &PyMaterialModel,
    force: f64,
    direction: (f64, f64, f64),
    station: Option<f64>,
    nodes: Option<usize>,
) -> PyResult<PyEquilibrium> {
    let (s, d) = load(rod, station, direction);
    let case = LoadCase::force(s, d, force).map_err(solver_err)?;
    solver::solve_point_load(&rod.inner, &material.inner, &case, &settings(nodes))
        .map(|inner| PyEquilibrium { inner })
        .map_err(solver_err)
}

/// Displacement-controlled solve: the force that moves `station` by
/// `displacement` metres along `direction`.
#[pyfunction]
#[pyo3(signature = (rod, material, displacement, direction = (1.0, 0.0, 0.0), station = None, nodes = None))]
fn solve_imposed_displacement(
    rod: &PyRodSpec,
    material: &PyMaterialModel,
    displacement: f64,
    direction: (f64, f64, f64),
    station: Option<f64>,
    nodes: Option<usize>,
) -> PyResult<PyEquilibrium> {
    let (s, d) = load(rod, station, direction);
    let case = LoadCase::displacement(s, d, displacement).map_err(solver_err)?;
    solver::solve_imposed_displacement(&rod.inner, &material.inner, &case, &settings(nodes))
        .map(|inner| PyEquilibrium { inner })
        .map_err(solver_err)
}

/// Force-displacement sweep; returns `[(displacement_m, force_n), ...]`.
#[pyfunction]
#[pyo3(signature = (rod, material, max_displacement = 0.02, samples = 11, direction = (1.0, 0.0, 0.0), nodes = None))]
fn sweep(
    py: Python<'_>,
    rod: &PyRodSpec,
    material: &PyMaterialModel,
    max_displacement: f64,
    samples: usize,
    direction: (f64, f64, f64),
    nodes: Option<usize>,
) -> PyResult<Vec<(f64, f64)>> {
    let protocol = SweepProtocol {
        direction: [direction.0, direction.1, direction.2],
        max_displacement,
        samples,
        station: None,
    };
    let s = settings(nodes);
    py.detach(|| lab::run_sweep(&rod.inner, &material.inner, &protocol, &s, "python"))
        .map(|sw| sw.curve.samples().to_vec())
        .map_err(lab_err)
}

/// Full-stroke secant stiffness `F(stroke) / stroke` of a sampled curve.
#[pyfunction]
fn stiffness_index(samples: Vec<(f64, f64)>, stroke: f64) -> PyResult<f64> {
    let curve = ForceDisplacementCurve::new(
        samples,
        CurveMetadata {
            label: "python".into(),
            direction: [1.0, 0.0, 0.0],
            pressure_kpa: f64::NAN,
        },
    )
    .map_err(lab_err)?;
    lab::stiffness_index(&curve, stroke).map_err(lab_err)
}

/// Minimum eversion pressure as a function of band reduction ratio.
#[pyclass(module = "everrod", name = "EversionModel", frozen)]
struct PyEversionModel {
    inner: EversionPressureModel,
}

#[pymethods]
impl PyEversionModel {
    #[getter]
    fn law(&self) -> &'static str {
        match self.inner.law {
            PressureLaw::PowerLaw => "power_law",
            PressureLaw::Exponential => "exponential",
        }
    }

    #[getter]
    fn p0_kpa(&self) -> f64 {
        self.inner.p0_kpa
    }

    #[getter]
    fn growth_rate(&self) -> f64 {
        self.inner.growth_rate
    }

    /// Predicted pressure (kPa) and whether `rho` lies outside the validated range.
    fn predict(&self, reduction_ratio: f64) -> (f64, bool) {
        let p = self.inner.predict(reduction_ratio);
        (p.pressure_kpa, p.out_of_range)
    }
}

/// Fits the eversion-pressure law to `[(reduction_ratio, pressure_kpa), ...]`.
#[pyfunction]
#[pyo3(signature = (points, law = "power_law"))]
fn fit_eversion_pressure(points: Vec<(f64, f64)>, law: &str) -> PyResult<PyEversionModel> {
    let law = match law {
        "power_law" => PressureLaw::PowerLaw,
        "exponential" => PressureLaw::Exponential,
        other => return Err(PyValueError::new_err(format!("unknown law `{other}`"))),
    };
    calibration::fit_eversion_pressure_with(&points, law)
        .map(|inner| PyEversionModel { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs the stiffness-experiment battery on the reference rod; returns
/// `[(variant_id, stiffness_index_n_per_m), ...]` and raises if an expected
/// ordering fails when `check_trends` is set.
#[pyfunction]
#[pyo3(signature = (material, check_trends = false, nodes = None))]
fn run_battery(py: Python<'_>, material: &PyMaterialModel, check_trends: bool, nodes: Option<usize>) -> PyResult<Vec<(String, f64)>> {
    let s = settings(nodes);
    let battery = py
        .detach(|| lab::run_stiffness_battery(&material.inner, &s))
        .map_err(lab_err)?;
    if check_trends && !battery.trend_violations().is_empty() {
        return Err(PyRuntimeError::new_err(format!("{:?}", battery.trend_violations())));
    }
    Ok(battery.results.iter().map(|r| (r.id.clone(), r.stiffness_index())).collect())
}

/// Runs the band designer on a design document (JSON text); returns the
/// result as JSON text.
#[pyfunction]
fn design(py: Python<'_>, problem_json: &str) -> PyResult<String> {
    let doc: DesignDocument =
        serde_json::from_str(problem_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py
        .detach(|| design_bands(&doc.problem, &doc.material, &doc.settings))
        .map_err(|e| match e {
            DesignError::Infeasible(_) | DesignError::Lab(_) => PyRuntimeError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        })?;
    Ok(serde_json::to_string_pretty(&result).expect("design serializes"))
}

/// Same as `everrod simulate SCENARIO --out OUT`; returns the report JSON.
#[pyfunction]
fn simulate_scenario(py: Python<'_>, scenario: PathBuf, out: PathBuf) -> PyResult<String> {
    py.detach(|| commands::cmd_simulate(&scenario, &out, None))
        .map(|r| r.to_json())
        .map_err(cli_err)
}

#[pymodule]
#[pyo3(name = "everrod")]
fn everrod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBandSpec>()?;
    m.add_class::<PyRodSpec>()?;
    m.add_class::<PyMaterialModel>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_class::<PyEversionModel>()?;
    m.add_function(wrap_pyfunction!(solve_point_load, m)?)?;
    m.add_function(wrap_pyfunction!(solve_imposed_displacement, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(stiffness_index, m)?)?;
    m.add_function(wrap_pyfunction!(fit_eversion_pressure, m)?)?;
    m.add_function(wrap_pyfunction!(run_battery, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
