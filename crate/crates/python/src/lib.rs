use std::sync::{Arc, OnceLock};

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chdg::dg::{DgField, DgSpace, FieldKind, NonlinearVariant};
use chdg::diagnostics::{self, GronwallInput, SpectrumWeight};
use chdg::interface::{self, InitialCondition, InterfacePolyline, ReferenceSpec, TestCase};
use chdg::mesh::Mesh;
use chdg::operators::{self, Discretization, InitialProjection, InverseLaplacianSolver};
use chdg::time_stepper::{self, ModelParams, Observer, SimState, StepRecord};
use chdg::Error;

create_exception!(chdg, SolverError, PyRuntimeError, "A nonlinear, linear or eigen solver failed.");

fn to_py(e: Error) -> PyErr {
    if e.is_solver_failure() {
        return SolverError::new_err(e.to_string());
    }
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn test_case(name: &str, epsilon: f64) -> PyResult<InitialCondition> {
    let t: TestCase = name.parse().map_err(to_py)?;
    if t == TestCase::Custom {
        return Err(PyValueError::new_err("test case 'custom' is not available from Python"));
    }
    InitialCondition::new(t, epsilon).map_err(to_py)
}

/// Coefficients of a broken polynomial field on a fixed mesh.
#[pyclass(name = "Field", module = "chdg", frozen)]
struct PyField {
    space: Arc<DgSpace>,
    field: DgField,
}

#[pymethods]
impl PyField {
    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.field.coeffs().to_vec()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.field.degree()
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.field.num_cells()
    }

    #[getter]
    fn continuous(&self) -> bool {
        self.field.kind() == FieldKind::Continuous
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<f64> {
        self.space.eval_at(&self.field, [x, y]).map_err(to_py)
    }

    /// Node-averaged continuous reconstruction.
    fn node_average(&self) -> PyResult<PyField> {
        let field = operators::node_average(&self.space, &self.field).map_err(to_py)?;
        Ok(PyField {
            space: self.space.clone(),
            field,
        })
    }

    fn __len__(&self) -> usize {
        self.field.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(cells={}, degree={}, continuous={})",
            self.field.num_cells(),
            self.field.degree(),
            self.continuous()
        )
    }
}

/// Mesh, DG space and the assembled mass and SIPG matrices.
#[pyclass(name = "Discretization", module = "chdg", frozen)]
struct PyDiscretization {
    disc: Arc<Discretization>,
    inv: OnceLock<InverseLaplacianSolver>,
}

impl PyDiscretization {
    fn inverse(&self) -> PyResult<&InverseLaplacianSolver> {
        if let Some(inv) = self.inv.get() {
            return Ok(inv);
        }
        let inv = InverseLaplacianSolver::new(self.disc.clone()).map_err(to_py)?;
        Ok(self.inv.get_or_init(|| inv))
    }

    fn wrap(&self, field: DgField) -> PyField {
        PyField {
            space: self.disc.space_arc().clone(),
            field,
        }
    }

    fn check(&self, u: &PyField) -> PyResult<()> {
        if !Arc::ptr_eq(&u.space, self.disc.space_arc())
            && (u.space.mesh().n() != self.disc.space().mesh().n()
                || u.space.degree() != self.disc.space().degree())
        {
            return Err(PyValueError::new_err("field lives on a different space"));
        }
        Ok(())
    }
}

#[pymethods]
impl PyDiscretization {
    #[new]
    #[pyo3(signature = (n, degree = 1, sigma0 = None))]
    fn new(n: usize, degree: usize, sigma0: Option<f64>) -> PyResult<Self> {
        let space = DgSpace::new(Arc::new(Mesh::uniform(n).map_err(to_py)?), degree).map_err(to_py)?;
        let sigma0 = sigma0.unwrap_or_else(|| chdg::dg::default_penalty(degree));
        let disc = Discretization::new(Arc::new(space), sigma0).map_err(to_py)?;
        Ok(Self {
            disc: Arc::new(disc),
            inv: OnceLock::new(),
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.disc.space().mesh().n()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.disc.space().mesh().h()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.disc.space().degree()
    }

    #[getter]
    fn sigma0(&self) -> f64 {
        self.disc.sigma0()
    }

    #[getter]
    fn ndofs(&self) -> usize {
        self.disc.space().ndofs()
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.disc.space().mesh().num_cells()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.disc.space().mesh().vertices().iter().map(|p| (p[0], p[1])).collect()
    }

    fn cells(&self) -> Vec<[usize; 3]> {
        self.disc.space().mesh().cells().to_vec()
    }

    fn field(&self, coeffs: Vec<f64>) -> PyResult<PyField> {
        let f = self.disc.space().field(coeffs, FieldKind::Broken).map_err(to_py)?;
        Ok(self.wrap(f))
    }

    /// Continuous starting value of a benchmark test.
    #[pyo3(signature = (test, epsilon, method = "l2_continuous"))]
    fn project(&self, test: &str, epsilon: f64, method: &str) -> PyResult<PyField> {
        let ic = test_case(test, epsilon)?;
        let method: InitialProjection = method.parse().map_err(to_py)?;
        let u = operators::project_initial(&self.disc, &ic, method).map_err(to_py)?;
        Ok(self.wrap(u))
    }

    /// DG elliptic projection of a benchmark initial condition.
    fn elliptic_projection(&self, test: &str, epsilon: f64) -> PyResult<PyField> {
        use chdg::operators::ScalarField;
        let ic = test_case(test, epsilon)?;
        let u = operators::elliptic_projection(&self.disc, |p| ic.value(p), |p| ic.gradient(p))
            .map_err(to_py)?;
        Ok(self.wrap(u))
    }

    fn energy(&self, u: &PyField, epsilon: f64) -> PyResult<f64> {
        self.check(u)?;
        time_stepper::discrete_energy(&self.disc, &u.field, epsilon).map_err(to_py)
    }

    fn total_mass(&self, u: &PyField) -> PyResult<f64> {
        self.check(u)?;
        Ok(self.disc.total_mass(&u.field))
    }

    /// Mean-zero `Delta_h^{-1} zeta`.
    fn inverse_laplacian(&self, zeta: &PyField) -> PyResult<PyField> {
        self.check(zeta)?;
        let t = self.inverse()?.inv_laplacian(&zeta.field).map_err(to_py)?;
        Ok(self.wrap(t))
    }

    fn minus1_norm(&self, zeta: &PyField) -> PyResult<f64> {
        self.check(zeta)?;
        self.inverse()?.minus1_norm(&zeta.field).map_err(to_py)
    }

    /// Smallest eigenvalue of the linearized operator at `u` against the
    /// `-1,h` inner product.
    fn spectrum(&self, u: &PyField, epsilon: f64) -> PyResult<f64> {
        self.check(u)?;
        diagnostics::spectrum_estimate(self.inverse()?, SpectrumWeight::Field(&u.field), epsilon)
            .map_err(to_py)
    }
}

#[pyclass(name = "ModelParams", module = "chdg")]
struct PyParams {
    inner: ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (epsilon = 0.1, k = 1e-5, t_final = 1e-4, scheme = "splitting"))]
    fn new(epsilon: f64, k: f64, t_final: f64, scheme: &str) -> PyResult<Self> {
        let scheme: NonlinearVariant = scheme.parse().map_err(to_py)?;
        Ok(Self {
            inner: ModelParams::new(epsilon, k, t_final, scheme),
        })
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[setter]
    fn set_epsilon(&mut self, v: f64) {
        self.inner.epsilon = v;
    }
    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }
    #[setter]
    fn set_k(&mut self, v: f64) {
        self.inner.k = v;
    }
    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }
    #[setter]
    fn set_t_final(&mut self, v: f64) {
        self.inner.t_final = v;
    }
    #[getter]
    fn sigma0(&self) -> f64 {
        self.inner.sigma0
    }
    #[setter]
    fn set_sigma0(&mut self, v: f64) {
        self.inner.sigma0 = v;
    }
    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree
    }
    #[setter]
    fn set_degree(&mut self, v: usize) {
        self.inner.degree = v;
    }
    #[getter]
    fn scheme(&self) -> String {
        self.inner.scheme.to_string()
    }
    #[setter]
    fn set_scheme(&mut self, v: &str) -> PyResult<()> {
        self.inner.scheme = v.parse().map_err(to_py)?;
        Ok(())
    }
    #[getter]
    fn newton_tol(&self) -> f64 {
        self.inner.newton_tol
    }
    #[setter]
    fn set_newton_tol(&mut self, v: f64) {
        self.inner.newton_tol = v;
    }
    #[getter]
    fn newton_max_iter(&self) -> usize {
        self.inner.newton_max_iter
    }
    #[setter]
    fn set_newton_max_iter(&mut self, v: usize) {
        self.inner.newton_max_iter = v;
    }

    fn num_steps(&self) -> usize {
        self.inner.num_steps()
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings()
    }

    fn errors(&self) -> Vec<String> {
        self.inner.errors()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(epsilon={}, k={}, t_final={}, scheme='{}', sigma0={}, degree={})",
            p.epsilon, p.k, p.t_final, p.scheme, p.sigma0, p.degree
        )
    }
}

/// Time series of one run and its final state.
#[pyclass(name = "RunResult", module = "chdg", frozen)]
struct PyRunResult {
    records: Vec<StepRecord>,
    #[pyo3(get)]
    u: Py<PyField>,
    #[pyo3(get)]
    w: Py<PyField>,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }
    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }
    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mass).collect()
    }
    #[getter]
    fn newton_iterations(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.newton_iters).collect()
    }
    #[getter]
    fn energy_law_residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy_law_residual).collect()
    }
    fn __len__(&self) -> usize {
        self.records.len()
    }
}

#[derive(Default)]
struct Last(Option<SimState>);

impl Observer for Last {
    fn on_record(&mut self, _r: &StepRecord, s: &SimState) -> chdg::Result<()> {
        self.0 = Some(s.clone());
        Ok(())
    }
}

/// Runs one simulation from a benchmark initial condition.
#[pyfunction]
#[pyo3(signature = (params, n, test = "1"))]
fn simulate(py: Python<'_>, params: &PyParams, n: usize, test: &str) -> PyResult<PyRunResult> {
    let p = params.inner.clone();
    p.validate(false).map_err(to_py)?;
    let ic = test_case(test, p.epsilon)?;
    let mesh = Arc::new(Mesh::uniform(n).map_err(to_py)?);
    let space = Arc::new(DgSpace::new(mesh, p.degree).map_err(to_py)?);
    let disc = Arc::new(Discretization::new(space.clone(), p.sigma0).map_err(to_py)?);
    let (series, last) = py
        .detach(|| {
            let mut last = Last::default();
            time_stepper::run_on(disc, &p, &ic, &mut last).map(|s| (s, last))
        })
        .map_err(to_py)?;
    let state = last.0.ok_or_else(|| PyRuntimeError::new_err("run produced no state"))?;
    Ok(PyRunResult {
        records: series.records,
        u: Py::new(py, PyField { space: space.clone(), field: state.u })?,
        w: Py::new(py, PyField { space, field: state.w })?,
    })
}

/// Zero level set of a field, one chord per crossed cell.
#[pyclass(name = "Interface", module = "chdg", frozen)]
struct PyInterface {
    poly: InterfacePolyline,
}

#[pymethods]
impl PyInterface {
    fn segments(&self) -> Vec<((f64, f64), (f64, f64))> {
        self.poly
            .segments
            .iter()
            .map(|s| ((s.p0[0], s.p0[1]), (s.p1[0], s.p1[1])))
            .collect()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.poly.length()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.poly.time
    }

    /// One-sided distance to `ellipse:a,b` or `circle:cx,cy,r`; returns
    /// `(distance, accuracy_bound)`.
    #[pyo3(signature = (reference, samples = interface::DEFAULT_REFERENCE_SAMPLES))]
    fn distance(&self, reference: &str, samples: usize) -> PyResult<(f64, f64)> {
        let r: ReferenceSpec = reference.parse().map_err(to_py)?;
        let d = interface::interface_distance(&self.poly, &r, samples).map_err(to_py)?;
        Ok((d.distance, d.accuracy_bound))
    }

    fn __len__(&self) -> usize {
        self.poly.len()
    }
}

/// Node-averages `field` and extracts its zero level set.
#[pyfunction]
#[pyo3(signature = (field, time = 0.0))]
fn extract_interface(field: &PyField, time: f64) -> PyResult<PyInterface> {
    let avg = operators::node_average(&field.space, &field.field).map_err(to_py)?;
    let poly = interface::extract_zero_level_set(&field.space, &avg, time).map_err(to_py)?;
    Ok(PyInterface { poly })
}

type Row = (usize, f64, f64, Option<f64>, f64, Option<f64>);

/// Spatial errors against a run on `reference_n` (default `2 * max(n_list)`);
/// rows are `(n, h, err_linf_l2, order_l2, err_l2_h1, order_h1)`.
#[pyfunction]
#[pyo3(signature = (params, n_list, test = "1", reference_n = None))]
fn convergence_study(
    py: Python<'_>,
    params: &PyParams,
    n_list: Vec<usize>,
    test: &str,
    reference_n: Option<usize>,
) -> PyResult<Vec<Row>> {
    let p = params.inner.clone();
    let ic = test_case(test, p.epsilon)?;
    let reference = reference_n.unwrap_or(2 * n_list.iter().copied().max().unwrap_or(0));
    let report = py
        .detach(|| diagnostics::convergence_study(&p, &ic, &n_list, reference))
        .map_err(to_py)?;
    Ok(report
        .rows
        .iter()
        .map(|r| (r.n, r.h, r.err_linf_l2, r.order_l2, r.err_l2_h1, r.order_h1))
        .collect())
}

/// Bounds `S_2..S_L` of the nonlinear discrete Gronwall inequality with
/// `L = len(b) + 1`.
#[pyfunction]
fn gronwall_bound(s1: f64, b: Vec<f64>, k: Vec<f64>, p: f64) -> PyResult<Vec<f64>> {
    let len = b.len() + 1;
    diagnostics::gronwall_bound(&GronwallInput { s1, b, k, p, len }).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "chdg")]
fn chdg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyDiscretization>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyInterface>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(extract_interface, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(gronwall_bound, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
