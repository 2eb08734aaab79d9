//! Python bindings: machines, protocols, the work bound and the harness entry points.
//!
//! Matrices cross the boundary as nested lists of Python complex numbers, row-major.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermomachine::bounds::{build_optimal_protocol, theorem1_bound, OptimizerConfig};
use thermomachine::embedding::{build_quench_unitary, physical_protocol_run, BatteryLadder, FlatBatteryState};
use thermomachine::harness::{parse_config, rows_to_string, run_experiment, verify_suite};
use thermomachine::machine::{
    assemble_h_sb, exact_work_decomposition, reverse_protocol, run_protocol, MachineSpec, Protocol, ProtocolStep,
};
use thermomachine::operator::{CMatrix, CompositeSpace, DensityMatrix, HermitianOperator};
use thermomachine::random::{random_density_matrix_on, seeded_rng};
use thermomachine::thermo::{self, InverseTemperature};

type Rows = Vec<Vec<Complex64>>;

fn py_err(e: thermomachine::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &Rows) -> PyResult<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a nonempty square matrix"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn hermitian(rows: &Rows) -> PyResult<HermitianOperator> {
    let m = to_matrix(rows)?;
    HermitianOperator::new(CompositeSpace::single(m.nrows()), m).map_err(py_err)
}

fn beta(b: f64) -> PyResult<InverseTemperature> {
    InverseTemperature::new(b).map_err(py_err)
}

#[pyclass(name = "Machine", frozen)]
struct PyMachine {
    inner: MachineSpec,
}

impl PyMachine {
    fn state(&self, rho: &Rows) -> PyResult<DensityMatrix> {
        DensityMatrix::new(self.inner.sb_space().clone(), to_matrix(rho)?).map_err(py_err)
    }
}

#[pymethods]
impl PyMachine {
    #[new]
    fn new(h_s: Rows, h_b: Rows, v: Rows, beta_value: f64) -> PyResult<Self> {
        let inner = MachineSpec::new(hermitian(&h_s)?, hermitian(&h_b)?, hermitian(&v)?, beta(beta_value)?)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Random machine with unit-norm `H_S`, `H_B` and a coupling of norm `coupling`.
    #[staticmethod]
    #[pyo3(signature = (seed, d_s=2, d_b=2, coupling=1.0, beta_value=1.0))]
    fn random(seed: u64, d_s: usize, d_b: usize, coupling: f64, beta_value: f64) -> PyResult<Self> {
        let inner = thermomachine::harness::config::random_machine(seed, d_s, d_b, coupling, beta(beta_value)?)
            .map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d_s(&self) -> usize {
        self.inner.d_s()
    }

    #[getter]
    fn d_b(&self) -> usize {
        self.inner.d_b()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta.beta()
    }

    #[getter]
    fn h_s(&self) -> Rows {
        to_rows(self.inner.h_s.entries())
    }

    /// `H_S' + H_B + V`, with the machine's own `H_S` by default.
    #[pyo3(signature = (h_s=None))]
    fn h_sb(&self, h_s: Option<Rows>) -> PyResult<Rows> {
        let h = match h_s {
            Some(r) => assemble_h_sb(&self.inner, &hermitian(&r)?, true).map_err(py_err)?,
            None => self.inner.initial_h_sb(),
        };
        Ok(to_rows(h.entries()))
    }

    fn gibbs_state(&self) -> Rows {
        to_rows(thermo::gibbs_state(&self.inner.initial_h_sb(), self.inner.beta).entries())
    }

    fn random_state(&self, seed: u64) -> Rows {
        to_rows(random_density_matrix_on(&mut seeded_rng(seed), self.inner.sb_space().clone()).entries())
    }

    fn with_scaled_coupling(&self, s: f64) -> Self {
        Self {
            inner: self.inner.with_scaled_coupling(s),
        }
    }

    fn __repr__(&self) -> String {
        format!("Machine(d_s={}, d_b={}, beta={})", self.inner.d_s(), self.inner.d_b(), self.inner.beta.beta())
    }
}

#[pyclass(name = "Protocol", frozen)]
struct PyProtocol {
    inner: Protocol,
}

#[pymethods]
impl PyProtocol {
    /// `steps` holds a system Hamiltonian for each quench and `None` for each thermalisation.
    #[new]
    fn new(machine: &PyMachine, steps: Vec<Option<Rows>>) -> PyResult<Self> {
        let steps = steps
            .iter()
            .map(|s| match s {
                None => Ok(ProtocolStep::Thermalise),
                Some(h) => Ok(ProtocolStep::quench(hermitian(h)?)),
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = Protocol::new(machine.inner.h_s.clone(), true, steps).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (machine, h_star, n, final_thermalise=false))]
    fn optimal(machine: &PyMachine, h_star: Rows, n: usize, final_thermalise: bool) -> PyResult<Self> {
        let inner = build_optimal_protocol(&machine.inner, &hermitian(&h_star)?, n, final_thermalise).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn reversed(&self) -> Self {
        Self {
            inner: reverse_protocol(&self.inner),
        }
    }

    fn steps(&self) -> Vec<Option<Rows>> {
        self.inner
            .steps()
            .iter()
            .map(|s| match s {
                ProtocolStep::Thermalise => None,
                ProtocolStep::Quench { new_h_s, .. } => Some(to_rows(new_h_s.entries())),
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (machine, rho, seed=0, random_starts=8))]
fn bound<'py>(
    py: Python<'py>,
    machine: &PyMachine,
    rho: Rows,
    seed: u64,
    random_starts: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let rho = machine.state(&rho)?;
    let cfg = OptimizerConfig {
        seed,
        random_starts,
        ..OptimizerConfig::default()
    };
    let r = theorem1_bound(&machine.inner, &rho, &cfg).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("delta_f_rev", r.delta_f_rev)?;
    d.set_item("delta_f_irrev", r.delta_f_irrev)?;
    d.set_item("bound", r.bound)?;
    d.set_item("minimizer_h_s", to_rows(r.minimizer_h_s.entries()))?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

#[pyfunction(name = "run_protocol")]
fn run<'py>(py: Python<'py>, machine: &PyMachine, protocol: &PyProtocol, rho: Rows) -> PyResult<Bound<'py, PyDict>> {
    let rho = machine.state(&rho)?;
    let (ledger, fin) = run_protocol(&machine.inner, &protocol.inner, &rho).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("per_step_work", ledger.per_step_work)?;
    d.set_item("total_work", ledger.total_work)?;
    d.set_item("heat", ledger.heat)?;
    d.set_item("final_state", to_rows(fin.entries()))?;
    Ok(d)
}

#[pyfunction]
fn work_decomposition<'py>(
    py: Python<'py>,
    machine: &PyMachine,
    protocol: &PyProtocol,
    rho: Rows,
) -> PyResult<Bound<'py, PyDict>> {
    let rho = machine.state(&rho)?;
    let w = exact_work_decomposition(&machine.inner, &protocol.inner, &rho).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("free_energy_terms", w.free_energy_terms.to_vec())?;
    d.set_item("relative_entropy_terms", w.relative_entropy_terms.clone())?;
    d.set_item("dissipation_sum", w.dissipation_sum)?;
    d.set_item("total", w.total())?;
    Ok(d)
}

#[pyfunction]
fn gibbs_state(h: Rows, beta_value: f64) -> PyResult<Rows> {
    Ok(to_rows(thermo::gibbs_state(&hermitian(&h)?, beta(beta_value)?).entries()))
}

fn single_state(rho: &Rows) -> PyResult<DensityMatrix> {
    let m = to_matrix(rho)?;
    DensityMatrix::new(CompositeSpace::single(m.nrows()), m).map_err(py_err)
}

#[pyfunction]
fn von_neumann_entropy(rho: Rows) -> PyResult<f64> {
    Ok(thermo::von_neumann_entropy(&single_state(&rho)?))
}

#[pyfunction]
fn relative_entropy(rho: Rows, sigma: Rows) -> PyResult<f64> {
    thermo::relative_entropy(&single_state(&rho)?, &single_state(&sigma)?).map_err(py_err)
}

#[pyfunction]
fn free_energy(rho: Rows, h: Rows, beta_value: f64) -> PyResult<f64> {
    thermo::free_energy(&single_state(&rho)?, &hermitian(&h)?, beta(beta_value)?).map_err(py_err)
}

/// Unitarity, translation and energy checks of the battery quench `h_before -> h_after`.
#[pyfunction]
fn quench_checks<'py>(
    py: Python<'py>,
    h_before: Rows,
    h_after: Rows,
    spacing: f64,
    levels: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let ladder = BatteryLadder::new(spacing, levels).map_err(py_err)?;
    let u = build_quench_unitary(&ladder, &hermitian(&h_before)?, &hermitian(&h_after)?).map_err(py_err)?;
    let c = u.checks();
    let d = PyDict::new(py);
    d.set_item("unitarity_defect", c.unitarity_defect)?;
    d.set_item("max_energy_commutator", c.max_energy_commutator)?;
    d.set_item("commutes_with_translations", c.commutes_with_translations)?;
    d.set_item("rounding_residual", u.rounding_residual())?;
    d.set_item("shifts", u.shifts())?;
    Ok(d)
}

#[pyfunction]
fn physical_run<'py>(
    py: Python<'py>,
    machine: &PyMachine,
    protocol: &PyProtocol,
    rho: Rows,
    spacing: f64,
    levels: usize,
    window: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let rho = machine.state(&rho)?;
    let battery = FlatBatteryState::centered(BatteryLadder::new(spacing, levels).map_err(py_err)?, window).map_err(py_err)?;
    let run = physical_protocol_run(&machine.inner, &protocol.inner, &rho, &battery, f64::INFINITY).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("physical_total", run.physical.total_work)?;
    d.set_item("abstract_total", run.abstract_ledger.total_work)?;
    d.set_item("relative_difference", run.relative_total_difference())?;
    d.set_item("max_rounding_residual", run.max_rounding_residual)?;
    Ok(d)
}

/// Runs the experiments of a TOML config and returns the CSV text.
#[pyfunction]
fn run_config(text: &str) -> PyResult<String> {
    let cfg = parse_config(text).map_err(py_err)?;
    let rows = run_experiment(&cfg).map_err(py_err)?;
    rows_to_string(&rows).map_err(py_err)
}

/// Runs the selected acceptance criteria; one dict per criterion.
#[pyfunction]
fn verify_config<'py>(py: Python<'py>, text: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = parse_config(text).map_err(py_err)?;
    let report = verify_suite(&cfg).map_err(py_err)?;
    report
        .results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("name", r.name)?;
            d.set_item("passed", r.passed)?;
            d.set_item("measured", r.measured)?;
            d.set_item("threshold", r.threshold)?;
            d.set_item("detail", &r.detail)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn thermomachine_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMachine>()?;
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(work_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_state, m)?)?;
    m.add_function(wrap_pyfunction!(von_neumann_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(quench_checks, m)?)?;
    m.add_function(wrap_pyfunction!(physical_run, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify_config, m)?)?;
    Ok(())
}
