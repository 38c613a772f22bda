//! End-to-end commands: verify a configured problem, simulate it against
//! its bounds, and plan cycle allocations.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::blocks::{block_max_distance, PartitionedVector};
use crate::bounds::{
    compare_with_bound, required_cycles_finite, write_bounds_csv, BoundInputs, BoundRow,
};
use crate::config::ExperimentConfig;
use crate::cycles::{detect_cycles, CycleCount};
use crate::error::{Error, Result};
use crate::objectives::TimeVaryingProblem;
use crate::planner::{brute_force_plan, solve_kkt, CyclePlan, DriftTerm, PlanningProblem, SolverOptions};
use crate::simulator::{
    audit_trace, error_series, initial_error, run, AuditReport, CommunicationRegime, ErrorSeries,
    EventTrace, Schedule, ScheduleMode,
};

/// Relative slack when comparing measured errors with bounds, covering
/// floating-point rounding only.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub t: usize,
    pub beta: f64,
    pub lipschitz: f64,
    pub gamma: f64,
    pub q: f64,
    pub sigma: f64,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub epochs: Vec<EpochReport>,
}

impl VerifyReport {
    pub fn from_problem(problem: &TimeVaryingProblem) -> Self {
        let epochs = problem
            .constants()
            .iter()
            .enumerate()
            .map(|(t, c)| EpochReport {
                t,
                beta: c.beta,
                lipschitz: c.lipschitz,
                gamma: c.gamma,
                q: c.q,
                sigma: c.sigma,
                kappa: c.kappa,
            })
            .collect();
        Self { epochs }
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>6}",
            "t", "beta", "L", "gamma", "q", "sigma", "kappa"
        )?;
        for e in &self.epochs {
            writeln!(
                f,
                "{:>4} {:>12.6} {:>12.6} {:>12.6e} {:>12.8} {:>12.6} {:>6}",
                e.t, e.beta, e.lipschitz, e.gamma, e.q, e.sigma, e.kappa
            )?;
        }
        write!(f, "all {} epochs satisfy the standing assumptions", self.epochs.len())
    }
}

/// Build the configured problem; fails with the first violated assumption.
pub fn verify(config: &ExperimentConfig) -> Result<(TimeVaryingProblem, VerifyReport)> {
    let problem = config.build_problem()?;
    let report = VerifyReport::from_problem(&problem);
    Ok((problem, report))
}

/// A run together with everything measured on it.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub trace: EventTrace,
    pub audit: AuditReport,
    pub cycles: CycleCount,
    pub series: ErrorSeries,
    pub d0: f64,
    pub bounds: BoundInputs,
    pub rows: Vec<BoundRow>,
}

impl SimulationOutcome {
    /// Epochs whose worst agent error exceeds the bound.
    pub fn bound_violations(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.measured_max_error > r.theorem2_bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE)
            .map(|r| r.t)
            .collect()
    }

    pub fn bound_holds(&self) -> bool {
        self.bound_violations().is_empty()
    }

    /// Write `errors.csv`, `events.csv`, `cycles.csv` and `bounds.csv`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.trace.write_errors_csv(BufWriter::new(File::create(dir.join("errors.csv"))?))?;
        self.trace.write_events_csv(BufWriter::new(File::create(dir.join("events.csv"))?))?;
        self.cycles.write_csv(BufWriter::new(File::create(dir.join("cycles.csv"))?))?;
        write_bounds_csv(&self.rows, BufWriter::new(File::create(dir.join("bounds.csv"))?))?;
        Ok(())
    }
}

impl fmt::Display for SimulationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>4} {:>6} {:>16} {:>16}", "t", "c(t)", "max error", "bound")?;
        for (row, c) in self.rows.iter().zip(&self.cycles.counts) {
            writeln!(
                f,
                "{:>4} {:>6} {:>16.8e} {:>16.8e}",
                row.t, c, row.measured_max_error, row.theorem2_bound
            )?;
        }
        writeln!(
            f,
            "trace audit: {}",
            match self.audit.first() {
                None => "pass".to_string(),
                Some(v) => format!("FAIL ({v})"),
            }
        )?;
        let violations = self.bound_violations();
        if violations.is_empty() {
            write!(f, "bound holds at every epoch")
        } else {
            write!(f, "bound exceeded at epochs {violations:?}")
        }
    }
}

/// Run the simulator and measure cycles, errors and bounds.
pub fn simulate_problem(
    problem: &TimeVaryingProblem,
    schedule: &Schedule,
    initial: &[PartitionedVector],
) -> Result<SimulationOutcome> {
    let trace = run(problem, schedule, initial)?;
    let audit = audit_trace(&trace);
    let cycles = detect_cycles(&trace);
    let series = error_series(&trace, problem)?;
    let d0 = initial_error(&trace, problem);
    let counts = cycles.counts.iter().map(|&c| c as f64).collect();
    let bounds = BoundInputs::from_problem(problem, d0, counts)?;
    let measured: Vec<f64> = (0..=problem.horizon()).map(|t| series.boundary_max(t)).collect();
    let rows = compare_with_bound(&measured, &bounds)?;
    Ok(SimulationOutcome {
        trace,
        audit,
        cycles,
        series,
        d0,
        bounds,
        rows,
    })
}

/// Simulate the configured experiment and write its CSVs to `out`.
pub fn simulate(config: &ExperimentConfig, out: Option<&Path>) -> Result<SimulationOutcome> {
    let problem = config.build_problem()?;
    let outcome = simulate_problem(&problem, &config.schedule()?, &config.initial_vectors(&problem)?)?;
    if let Some(dir) = output_dir(config, out) {
        outcome.write_csvs(&dir)?;
    }
    Ok(outcome)
}

fn output_dir(config: &ExperimentConfig, out: Option<&Path>) -> Option<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| config.output.as_ref().map(|o| o.dir.clone()))
}

/// `max_i ||Pi_U(u^i(0)) - u_hat(0)||_{2,inf}`.
pub fn projected_initial_error(problem: &TimeVaryingProblem, initial: &[PartitionedVector]) -> Result<f64> {
    let target = problem.minimizer(0);
    let mut worst: f64 = 0.0;
    for u in initial {
        let u = problem.constraint().project(u)?;
        worst = worst.max(block_max_distance(u.as_slice(), target.as_slice(), problem.partition()));
    }
    Ok(worst)
}

fn raise(p: f64) -> f64 {
    p + 0.5 * (1.0 - p)
}

/// The schedule with every probability moved halfway towards one.
pub fn raise_probabilities(schedule: &Schedule) -> Schedule {
    let mode = match schedule.mode {
        ScheduleMode::Synchronous => ScheduleMode::Synchronous,
        ScheduleMode::Bernoulli {
            p_compute,
            communicate,
        } => ScheduleMode::Bernoulli {
            p_compute: raise(p_compute),
            communicate: match communicate {
                CommunicationRegime::Fixed { p } => CommunicationRegime::Fixed { p: raise(p) },
                CommunicationRegime::Uniform { low, high } => CommunicationRegime::Uniform {
                    low: raise(low),
                    high: raise(high),
                },
            },
        },
    };
    Schedule { mode, ..*schedule }
}

/// Times the schedule's probabilities are raised before giving up.
pub const MAX_RAISES: usize = 4;
const FIRST_TRIAL_TICKS: usize = 64;

/// A run in which each epoch was cut right after its planned number of
/// cycles completed.
#[derive(Debug, Clone)]
pub struct EnforcedRun {
    pub outcome: SimulationOutcome,
    pub schedule: Schedule,
    pub kappas: Vec<usize>,
    pub targets: Vec<u64>,
    /// Whether every epoch reached its target within the tick limit.
    pub achieved: bool,
    pub raises: usize,
}

/// Epoch by epoch, find the tick at which the `targets[t]`-th cycle of
/// epoch `t` completes and end the epoch there, so that `c(t)` equals the
/// target exactly. Runs are prefix-deterministic, so later epochs never
/// change earlier ones. If some epoch cannot reach its target within
/// `max_ticks` ticks, the schedule's probabilities are raised and the
/// search restarts; after `MAX_RAISES` raises the shortfall is reported
/// through `achieved = false`.
pub fn enforce_cycles(
    problem: &TimeVaryingProblem,
    schedule: &Schedule,
    initial: &[PartitionedVector],
    targets: &[u64],
    max_ticks: usize,
) -> Result<EnforcedRun> {
    let epochs = problem.horizon() + 1;
    if targets.len() != epochs {
        return Err(Error::DimensionMismatch {
            expected: epochs,
            found: targets.len(),
        });
    }
    if max_ticks == 0 {
        return Err(Error::InvalidInput("tick limit must be positive".into()));
    }
    let mut schedule = *schedule;
    for raises in 0..=MAX_RAISES {
        let mut fixed: Vec<usize> = Vec::with_capacity(epochs);
        for t in 0..epochs {
            if targets[t] == 0 {
                fixed.push(1);
                continue;
            }
            let start: usize = fixed.iter().sum();
            let mut trial = FIRST_TRIAL_TICKS.min(max_ticks);
            let found = loop {
                let mut kappas = fixed.clone();
                kappas.push(trial);
                kappas.resize(epochs, 1);
                let trace = run(&problem.with_kappas(&kappas)?, &schedule, initial)?;
                let cycles = detect_cycles(&trace);
                if let Some(&tick) = cycles.completions[t].get(targets[t] as usize - 1) {
                    break Some(tick - start + 1);
                }
                if trial == max_ticks {
                    break None;
                }
                trial = (trial * 2).min(max_ticks);
            };
            match found {
                Some(kappa) => fixed.push(kappa),
                None => break,
            }
        }
        let achieved = fixed.len() == epochs;
        if achieved || raises == MAX_RAISES {
            let mut kappas = fixed;
            kappas.resize(epochs, max_ticks);
            let tuned = problem.with_kappas(&kappas)?;
            let outcome = simulate_problem(&tuned, &schedule, initial)?;
            return Ok(EnforcedRun {
                outcome,
                schedule,
                kappas,
                targets: targets.to_vec(),
                achieved,
                raises,
            });
        }
        schedule = raise_probabilities(&schedule);
    }
    unreachable!("the last raise always returns")
}

/// What `plan` computed.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub d0: f64,
    pub b: f64,
    pub q_max: f64,
    pub rho: Option<f64>,
    /// Uniform per-epoch requirement for `rho`.
    pub required_cycles: Option<u64>,
    /// Budgeted plan with the configured drift weighting.
    pub plan: Option<CyclePlan>,
    /// The same budget solved with the other drift weighting.
    pub alternative: Option<CyclePlan>,
    /// Exhaustive integer optimum when enumerable.
    pub brute_force: Option<(Vec<u64>, f64)>,
    pub enforced: Option<EnforcedRun>,
}

impl PlanOutcome {
    /// Integer cycles per epoch: the budgeted plan if any, else the uniform
    /// requirement.
    pub fn integer_plan(&self, epochs: usize) -> Option<Vec<u64>> {
        self.plan
            .as_ref()
            .map(|p| p.c_int.clone())
            .or_else(|| self.required_cycles.map(|c| vec![c; epochs]))
    }

    pub fn write_csv(&self, epochs: usize, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = BufWriter::new(File::create(dir.join("plan.csv"))?);
        match &self.plan {
            Some(p) => p.write_csv(file),
            None => {
                let c = self.required_cycles.unwrap_or(0);
                let uniform = CyclePlan {
                    c_real: vec![c as f64; epochs],
                    c_int: vec![c; epochs],
                    mu: 0.0,
                    objective_value: 0.0,
                    integer_objective: 0.0,
                    max_residual: 0.0,
                    budget_gap: 0.0,
                    drift_term: DriftTerm::WithCycles,
                };
                uniform.write_csv(file)
            }
        }
    }
}

impl fmt::Display for PlanOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "D0 = {:.6e}, B = {:.6e}, q_max = {:.8}", self.d0, self.b, self.q_max)?;
        if let (Some(rho), Some(c)) = (self.rho, self.required_cycles) {
            writeln!(f, "cycles per epoch for error target {rho}: {c}")?;
        }
        if let Some(p) = &self.plan {
            writeln!(f, "{:>4} {:>14} {:>6}", "t", "c_real", "c_int")?;
            for (t, (r, i)) in p.c_real.iter().zip(&p.c_int).enumerate() {
                writeln!(f, "{t:>4} {r:>14.6} {i:>6}")?;
            }
            writeln!(
                f,
                "mu = {:.6e}, objective {:.6e} (real) {:.6e} (integer), residual {:.1e}",
                p.mu, p.objective_value, p.integer_objective, p.max_residual
            )?;
        }
        if let Some(a) = &self.alternative {
            writeln!(
                f,
                "other drift weighting: integer plan {:?}, objective {:.6e}",
                a.c_int, a.integer_objective
            )?;
        }
        if let Some((c, v)) = &self.brute_force {
            writeln!(f, "enumerated optimum: {c:?}, objective {v:.6e}")?;
        }
        if let Some(e) = &self.enforced {
            let worst = e
                .outcome
                .rows
                .iter()
                .map(|r| r.measured_max_error)
                .fold(0.0, f64::max);
            writeln!(
                f,
                "enforced run: targets {} after {} probability raises, worst end-of-epoch error {:.6e}",
                if e.achieved { "met" } else { "NOT met" },
                e.raises,
                worst
            )?;
            if let Some(rho) = self.rho {
                writeln!(
                    f,
                    "all end-of-epoch errors within {rho}: {}",
                    e.outcome.rows.iter().all(|r| r.measured_max_error <= rho)
                )?;
            }
        }
        Ok(())
    }
}

/// Compute the cycle requirement and budgeted plan of the configured
/// problem, optionally enforce it in simulation, and write `plan.csv`.
pub fn plan(config: &ExperimentConfig, out: Option<&Path>) -> Result<PlanOutcome> {
    let settings = config
        .planner
        .clone()
        .ok_or_else(|| Error::Config("plan needs a [planner] section".into()))?;
    let problem = config.build_problem()?;
    let initial = config.initial_vectors(&problem)?;
    let d0 = projected_initial_error(&problem, &initial)?;
    let epochs = problem.horizon() + 1;
    let inputs = BoundInputs::from_problem(&problem, d0, vec![0.0; epochs])?;
    let (b, q_max) = (inputs.b(), inputs.q_max());
    let required_cycles = settings
        .rho
        .map(|rho| required_cycles_finite(rho, b, q_max, problem.horizon()))
        .transpose()?;

    let planning = PlanningProblem::from_bounds(&inputs);
    let (mut plan, mut alternative, mut brute_force) = (None, None, None);
    if let Some(budget) = settings.budget {
        let opts = SolverOptions {
            c_min: settings.c_min as f64,
            drift_term: settings.drift_term,
        };
        plan = Some(solve_kkt(&planning, budget as f64, &opts)?);
        let other = match settings.drift_term {
            DriftTerm::WithCycles => DriftTerm::WithoutCycles,
            DriftTerm::WithoutCycles => DriftTerm::WithCycles,
        };
        alternative = solve_kkt(&planning, budget as f64, &SolverOptions { drift_term: other, ..opts }).ok();
        brute_force = brute_force_plan(&planning, budget, settings.c_min).ok();
    }

    let mut outcome = PlanOutcome {
        d0,
        b,
        q_max,
        rho: settings.rho,
        required_cycles,
        plan,
        alternative,
        brute_force,
        enforced: None,
    };
    if settings.enforce {
        if let Some(targets) = outcome.integer_plan(epochs) {
            outcome.enforced = Some(enforce_cycles(
                &problem,
                &config.schedule()?,
                &initial,
                &targets,
                settings.max_ticks_per_epoch,
            )?);
        }
    }
    if let Some(dir) = output_dir(config, out) {
        outcome.write_csv(epochs, &dir)?;
        if let Some(e) = &outcome.enforced {
            e.outcome.write_csvs(&dir.join("enforced"))?;
        }
    }
    Ok(outcome)
}
