//! Python bindings for `tvtrack`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tvtrack::bounds::{self, BoundInputs};
use tvtrack::config::ExperimentConfig;
use tvtrack::experiment;
use tvtrack::planner::{self, DriftTerm, PlanningProblem, SolverOptions};
use tvtrack::{BoxSet, Error, Partition, PartitionedVector};

create_exception!(tvtrack_py, AssumptionError, PyValueError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Assumption(_) => AssumptionError::new_err(e.to_string()),
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        Error::Convergence { .. } | Error::Solver { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn drift_term(name: &str) -> PyResult<DriftTerm> {
    match name {
        "with_cycles" => Ok(DriftTerm::WithCycles),
        "without_cycles" => Ok(DriftTerm::WithoutCycles),
        other => Err(PyValueError::new_err(format!(
            "drift_term must be 'with_cycles' or 'without_cycles', got {other:?}"
        ))),
    }
}

/// `max_i ||v_i||_2` over the blocks of `v`.
#[pyfunction]
fn block_max_norm(values: Vec<f64>, block_dims: Vec<usize>) -> PyResult<f64> {
    let p = Partition::new(block_dims).map_err(to_py)?;
    let v = PartitionedVector::new(values, p).map_err(to_py)?;
    Ok(v.block_max_norm())
}

/// Clamp `values` into the box `[lower, upper]`.
#[pyfunction]
fn project_box(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Vec<f64>> {
    let p = Partition::new(vec![values.len()]).map_err(to_py)?;
    let set = BoxSet::new(lower, upper, p.clone()).map_err(to_py)?;
    let v = PartitionedVector::new(values, p).map_err(to_py)?;
    Ok(set.project(&v).map_err(to_py)?.into_vec())
}

fn parse(config: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_toml_str(config).map_err(to_py)
}

/// Per-epoch constants of a configured problem.
#[pyclass(get_all, frozen)]
struct Problem {
    num_agents: usize,
    horizon: usize,
    kappas: Vec<usize>,
    beta: Vec<f64>,
    lipschitz: Vec<f64>,
    gamma: Vec<f64>,
    q: Vec<f64>,
    sigma: Vec<f64>,
    minimizers: Vec<Vec<f64>>,
}

/// Build and verify the problem described by a TOML config.
#[pyfunction]
fn build_problem(config: &str) -> PyResult<Problem> {
    let problem = parse(config)?.build_problem().map_err(to_py)?;
    let c = problem.constants();
    Ok(Problem {
        num_agents: problem.num_agents(),
        horizon: problem.horizon(),
        kappas: problem.kappas(),
        beta: c.iter().map(|e| e.beta).collect(),
        lipschitz: c.iter().map(|e| e.lipschitz).collect(),
        gamma: c.iter().map(|e| e.gamma).collect(),
        q: problem.q_values(),
        sigma: problem.sigmas(),
        minimizers: (0..=problem.horizon())
            .map(|t| problem.minimizer(t).as_slice().to_vec())
            .collect(),
    })
}

/// The verification table as text.
#[pyfunction]
fn verify(config: &str) -> PyResult<String> {
    let (_, report) = experiment::verify(&parse(config)?).map_err(to_py)?;
    Ok(report.to_string())
}

/// What one simulated run measured.
#[pyclass(get_all, frozen)]
struct Simulation {
    total_ticks: usize,
    audit_passed: bool,
    d0: f64,
    cycles: Vec<usize>,
    completion_ticks: Vec<Vec<usize>>,
    /// `[t][i]` error of agent `i` at the end of epoch `t`.
    boundary_errors: Vec<Vec<f64>>,
    measured_max_error: Vec<f64>,
    bound: Vec<f64>,
}

/// Run the configured experiment; CSVs are written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn simulate(config: &str, out_dir: Option<PathBuf>) -> PyResult<Simulation> {
    let outcome = experiment::simulate(&parse(config)?, out_dir.as_deref()).map_err(to_py)?;
    Ok(Simulation {
        total_ticks: outcome.trace.total_ticks(),
        audit_passed: outcome.audit.passed(),
        d0: outcome.d0,
        cycles: outcome.cycles.counts.clone(),
        completion_ticks: outcome.cycles.completions.clone(),
        boundary_errors: outcome.series.boundary().to_vec(),
        measured_max_error: outcome.rows.iter().map(|r| r.measured_max_error).collect(),
        bound: outcome.rows.iter().map(|r| r.theorem2_bound).collect(),
    })
}

/// Tracking bound at the end of every epoch.
#[pyfunction]
fn finite_time_bounds(q: Vec<f64>, sigma: Vec<f64>, d0: f64, cycles: Vec<f64>) -> PyResult<Vec<f64>> {
    let inputs = BoundInputs::new(q, sigma, d0, cycles).map_err(to_py)?;
    Ok(bounds::finite_time_bounds(&inputs))
}

/// Radius `B q / (1 - q)` of the ball the error eventually stays in.
#[pyfunction]
fn asymptotic_bound(b: f64, q_max: f64) -> PyResult<f64> {
    bounds::asymptotic_bound(b, q_max).map_err(to_py)
}

/// Cycles per epoch that keep the error below `rho` from the first epoch on.
#[pyfunction]
fn required_cycles(rho: f64, b: f64, q_max: f64, horizon: usize) -> PyResult<u64> {
    bounds::required_cycles_finite(rho, b, q_max, horizon).map_err(to_py)
}

/// Cycles per epoch that keep the error below `rho` eventually.
#[pyfunction]
fn required_cycles_asymptotic(rho: f64, b: f64, q_max: f64) -> PyResult<u64> {
    bounds::required_cycles_asymptotic(rho, b, q_max).map_err(to_py)
}

#[pyclass(get_all, frozen)]
struct Plan {
    c_real: Vec<f64>,
    c_int: Vec<u64>,
    mu: f64,
    objective_value: f64,
    integer_objective: f64,
    max_residual: f64,
    budget_gap: f64,
}

/// Spread `budget` cycles over the epochs to minimize the summed bound.
#[pyfunction]
#[pyo3(signature = (q, sigma, d0, budget, c_min=1.0, drift_term="with_cycles"))]
fn plan_cycles(
    q: Vec<f64>,
    sigma: Vec<f64>,
    d0: f64,
    budget: f64,
    c_min: f64,
    drift_term: &str,
) -> PyResult<Plan> {
    let problem = PlanningProblem::new(q, sigma, d0).map_err(to_py)?;
    let opts = SolverOptions {
        c_min,
        drift_term: self::drift_term(drift_term)?,
    };
    let plan = planner::solve_kkt(&problem, budget, &opts).map_err(to_py)?;
    Ok(Plan {
        c_real: plan.c_real,
        c_int: plan.c_int,
        mu: plan.mu,
        objective_value: plan.objective_value,
        integer_objective: plan.integer_objective,
        max_residual: plan.max_residual,
        budget_gap: plan.budget_gap,
    })
}

/// Best integer plan by enumeration, with its objective.
#[pyfunction]
#[pyo3(signature = (q, sigma, d0, budget, c_min=1))]
fn brute_force_plan(q: Vec<f64>, sigma: Vec<f64>, d0: f64, budget: u64, c_min: u64) -> PyResult<(Vec<u64>, f64)> {
    let problem = PlanningProblem::new(q, sigma, d0).map_err(to_py)?;
    planner::brute_force_plan(&problem, budget, c_min).map_err(to_py)
}

#[pymodule]
fn tvtrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AssumptionError", m.py().get_type::<AssumptionError>())?;
    m.add_class::<Problem>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<Plan>()?;
    m.add_function(wrap_pyfunction!(block_max_norm, m)?)?;
    m.add_function(wrap_pyfunction!(project_box, m)?)?;
    m.add_function(wrap_pyfunction!(build_problem, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(finite_time_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_bound, m)?)?;
    m.add_function(wrap_pyfunction!(required_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(required_cycles_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(plan_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_plan, m)?)?;
    Ok(())
}
