//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvtrack::bounds::{asymptotic_bound, required_cycles_finite};
use tvtrack::config::{ExperimentConfig, ProblemConfig};
use tvtrack::experiment::{
    enforce_cycles, plan, projected_initial_error, simulate, simulate_problem, SimulationOutcome,
};
use tvtrack::objectives::{
    generate_quadratic_problem, AnalysisOptions, ProblemSetup, QuadraticGenerator, TimeVaryingProblem,
};
use tvtrack::planner::{brute_force_plan, solve_kkt, DriftTerm, PlanningProblem, SolverOptions};
use tvtrack::simulator::{shared_initial, CommunicationRegime, DelayModel, EventKind, Schedule};
use tvtrack::PartitionedVector;

type Verdict = Result<String, String>;

fn quadratic(agents: usize, horizon: usize, kappa: usize, seed: u64) -> TimeVaryingProblem {
    let gen = QuadraticGenerator {
        block_dims: vec![2; agents],
        horizon,
        seed,
        drift_scale: 1.0,
    };
    let setup = ProblemSetup {
        lower: -10.0,
        upper: 10.0,
        kappas: vec![kappa],
        analysis: AnalysisOptions::default(),
    };
    generate_quadratic_problem(&gen, &setup).expect("generated problem verifies")
}

fn filled(problem: &TimeVaryingProblem, value: f64) -> Vec<PartitionedVector> {
    let p = problem.partition().clone();
    let u0 = PartitionedVector::new(vec![value; p.total_dim()], p).expect("matching length");
    shared_initial(problem, &u0)
}

/// Each tick an agent computes with probability one half and then
/// broadcasts with a probability redrawn uniformly from [0.1, 0.9].
fn sparse_regime(seed: u64) -> Schedule {
    Schedule::bernoulli(
        0.5,
        CommunicationRegime::Uniform { low: 0.1, high: 0.9 },
        DelayModel::Zero,
        seed,
    )
}

fn regimes(seed: u64) -> [(&'static str, Schedule); 3] {
    [
        ("synchronous", Schedule::synchronous(DelayModel::Zero, seed)),
        ("sparse", sparse_regime(seed)),
        (
            "delayed",
            Schedule::bernoulli(
                0.5,
                CommunicationRegime::Fixed { p: 1.0 },
                DelayModel::Uniform { min: 1, max: 5 },
                seed,
            ),
        ),
    ]
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("shipped config loads")
}

fn tracking_bound_holds() -> Verdict {
    let mut runs = 0;
    let mut violations = Vec::new();
    let mut tightest: f64 = 0.0;
    for seed in 0..20u64 {
        let agents = [3, 15][seed as usize % 2];
        let horizon = [3, 9][(seed as usize / 2) % 2];
        let kappa = [20, 50][(seed as usize / 4) % 2];
        let problem = quadratic(agents, horizon, kappa, 100 + seed);
        let start = [10.0, -10.0, 0.0][seed as usize % 3];
        for (name, schedule) in regimes(seed) {
            let outcome = simulate_problem(&problem, &schedule, &filled(&problem, start)).expect("run");
            runs += 1;
            if !outcome.audit.passed() {
                violations.push(format!("seed {seed} {name}: audit failed"));
            }
            for row in &outcome.rows {
                tightest = tightest.max(row.measured_max_error / row.theorem2_bound);
                if row.measured_max_error > row.theorem2_bound {
                    violations.push(format!(
                        "seed {seed} {name} t={}: {:e} > {:e}",
                        row.t, row.measured_max_error, row.theorem2_bound
                    ));
                }
            }
        }
    }
    let detail = format!(
        "{runs} runs, {} violations, largest error/bound ratio {tightest:.3e}",
        violations.len()
    );
    if violations.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", violations[0]))
    }
}

/// Errors below this are dominated by the accuracy of the reference
/// minimizer, so ratios between them carry no information.
const RATIO_FLOOR: f64 = 1e-6;

fn per_cycle_contraction() -> Verdict {
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let problem = quadratic(4 + seed as usize % 4, 0, 40, 300 + seed);
        let q = problem.q_values()[0];
        let initial = filled(&problem, 10.0);
        for (name, schedule) in regimes(seed) {
            let outcome = simulate_problem(&problem, &schedule, &initial).expect("run");
            let mut previous = outcome.d0;
            for &tick in &outcome.cycles.completions[0] {
                let current = outcome.trace.max_error(tick);
                if previous < RATIO_FLOOR {
                    skipped += 1;
                } else {
                    checked += 1;
                    let ratio = current / previous;
                    worst_excess = worst_excess.max(ratio - q);
                    if ratio > q + 1e-9 {
                        failures.push(format!("seed {seed} {name} tick {tick}: ratio {ratio} > q {q}"));
                    }
                }
                previous = current;
            }
        }
    }
    let detail = format!(
        "{checked} cycle ratios checked, {skipped} below the {RATIO_FLOOR:e} accuracy floor, \
         max(ratio - q) = {worst_excess:.3e}"
    );
    if checked == 0 {
        return Err(format!("{detail}; nothing was checked"));
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", failures[0]))
    }
}

fn cycle_requirement_meets_tolerance() -> Verdict {
    let mut runs = 0;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut required = Vec::new();
    for &rho in &[0.5, 0.1, 0.01] {
        for seed in 0..5u64 {
            let problem = quadratic(3, 3, 10, 500 + seed);
            let initial = filled(&problem, 10.0);
            let d0 = projected_initial_error(&problem, &initial).expect("initial error");
            let b = problem.sigmas().into_iter().fold(d0, f64::max);
            let q_max = problem.q_values().into_iter().fold(0.0, f64::max);
            let c = required_cycles_finite(rho, b, q_max, problem.horizon()).expect("requirement");
            if seed == 0 {
                required.push(format!("rho {rho}: c = {c}"));
            }
            let targets = vec![c; problem.horizon() + 1];
            let run = enforce_cycles(&problem, &sparse_regime(seed), &initial, &targets, 20_000)
                .expect("enforced run");
            runs += 1;
            let counts: Vec<u64> = run.outcome.cycles.counts.iter().map(|&n| n as u64).collect();
            if !run.achieved || counts != targets {
                failures.push(format!("rho {rho} seed {seed}: cycles {counts:?} instead of {c}"));
                continue;
            }
            for (t, errors) in run.outcome.series.boundary().iter().enumerate() {
                for &e in errors {
                    worst = worst.max(e / rho);
                    if e > rho {
                        failures.push(format!("rho {rho} seed {seed} t={t}: error {e:e}"));
                    }
                }
            }
        }
    }
    let detail = format!(
        "{runs} runs ({}), largest boundary error / rho {worst:.3e}",
        required.join(", ")
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", failures[0]))
    }
}

fn asymptotic_ball() -> Verdict {
    let problem = quadratic(3, 100, 10, 700);
    let outcome = simulate_problem(
        &problem,
        &Schedule::synchronous(DelayModel::Zero, 1),
        &filled(&problem, 10.0),
    )
    .expect("run");
    if let Some(t) = outcome.cycles.counts.iter().position(|&c| c == 0) {
        return Err(format!("epoch {t} completed no cycle"));
    }
    let ball = asymptotic_bound(outcome.bounds.b(), outcome.bounds.q_max()).expect("ball");
    let tail = (81..=100).map(|t| outcome.series.boundary_max(t)).fold(0.0, f64::max);
    let detail = format!(
        "max error over the last 20 epochs {tail:.4e}, radius B q/(1-q) = {ball:.4e} (q_max {:.4})",
        outcome.bounds.q_max()
    );
    if tail <= ball + 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct PlannerStats {
    worst_residual: f64,
    worst_gap: f64,
    worst_excess: f64,
    failures: Vec<String>,
}

fn planner_against_enumeration(term: DriftTerm) -> PlannerStats {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut stats = PlannerStats {
        worst_residual: 0.0,
        worst_gap: 0.0,
        worst_excess: 0.0,
        failures: Vec::new(),
    };
    for instance in 0..50 {
        let epochs = rng.random_range(1..=5usize);
        let q: Vec<f64> = (0..epochs).map(|_| rng.random_range(0.3..0.99)).collect();
        let sigma: Vec<f64> = (1..epochs).map(|_| rng.random_range(0.0..3.0)).collect();
        let d0 = rng.random_range(0.1..10.0);
        let c_min = rng.random_range(0..=1u64);
        let budget = rng.random_range((c_min as usize * epochs).max(1)..=20) as u64;
        let problem = PlanningProblem::new(q, sigma, d0).expect("valid instance");
        let opts = SolverOptions {
            c_min: c_min as f64,
            drift_term: term,
        };
        let plan = match solve_kkt(&problem, budget as f64, &opts) {
            Ok(plan) => plan,
            Err(e) => {
                stats.failures.push(format!("instance {instance}: {e}"));
                continue;
            }
        };
        // judged against the exact derivative of the objective
        let residual = problem
            .stationarity_residuals(&plan.c_real, plan.mu, c_min as f64, DriftTerm::WithCycles)
            .into_iter()
            .fold(0.0, f64::max);
        let gap = (plan.c_real.iter().sum::<f64>() - budget as f64).abs();
        let (_, best) = brute_force_plan(&problem, budget, c_min).expect("enumeration");
        let excess = if best > 0.0 {
            plan.integer_objective / best - 1.0
        } else {
            plan.integer_objective
        };
        stats.worst_residual = stats.worst_residual.max(residual);
        stats.worst_gap = stats.worst_gap.max(gap);
        stats.worst_excess = stats.worst_excess.max(excess);
        if residual >= 1e-8 || gap >= 1e-8 || excess > 0.05 {
            stats.failures.push(format!(
                "instance {instance}: residual {residual:.2e}, gap {gap:.2e}, {:.2}% above enumeration",
                100.0 * excess
            ));
        }
    }
    stats
}

fn planner_matches_enumeration() -> Verdict {
    let exact = planner_against_enumeration(DriftTerm::WithCycles);
    let printed = planner_against_enumeration(DriftTerm::WithoutCycles);
    let describe = |s: &PlannerStats| {
        format!(
            "residual {:.1e}, gap {:.1e}, worst {:.2}% above enumeration, {} failing",
            s.worst_residual,
            s.worst_gap,
            100.0 * s.worst_excess,
            s.failures.len()
        )
    };
    let detail = format!(
        "50 instances; default drift weighting: {}; uncycled drift weighting: {}",
        describe(&exact),
        describe(&printed)
    );
    if exact.failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", exact.failures[0]))
    }
}

fn switching_shape() -> Verdict {
    let problem = quadratic(15, 10, 50, 2024);
    let outcome = simulate_problem(&problem, &sparse_regime(7), &filled(&problem, 0.0)).expect("run");
    let trace = &outcome.trace;
    let series = &outcome.series;

    let increases = (1..=10)
        .filter(|&t| series.tick_max(trace.epoch_start(t)) > series.tick_max(trace.epoch_last_tick(t - 1)))
        .count();

    let mut rises_between_cycles = 0;
    let mut rises_between_ticks = 0;
    for t in 0..=10 {
        let first = trace.epoch_start(t);
        let mut last = series.tick_max(first);
        for &tick in &outcome.cycles.completions[t] {
            let now = series.tick_max(tick);
            if now > last {
                rises_between_cycles += 1;
            }
            last = now;
        }
        for k in first + 1..=trace.epoch_last_tick(t) {
            if series.tick_max(k) > series.tick_max(k - 1) {
                rises_between_ticks += 1;
            }
        }
    }

    let mut active = vec![vec![false; trace.num_agents()]; trace.total_ticks()];
    for event in &trace.events {
        match event.kind {
            EventKind::Compute { agent, .. } => active[event.tick][agent] = true,
            EventKind::Deliver { dst, .. } => active[event.tick][dst] = true,
            EventKind::Send { .. } => {}
        }
    }
    let completion: Vec<bool> = {
        let mut c = vec![false; trace.total_ticks()];
        for tick in outcome.cycles.completion_ticks() {
            c[tick] = true;
        }
        c
    };
    let mut idle_changes = 0;
    let mut flat_ticks = 0;
    let mut flat_without_cycle = 0;
    for t in 0..=10 {
        for k in trace.epoch_start(t) + 1..=trace.epoch_last_tick(t) {
            for i in 0..trace.num_agents() {
                if !active[k][i] && series.tick_error(k, i) != series.tick_error(k - 1, i) {
                    idle_changes += 1;
                }
            }
            if series.tick_max(k) == series.tick_max(k - 1) {
                flat_ticks += 1;
                if !completion[k] {
                    flat_without_cycle += 1;
                }
            }
        }
    }

    let detail = format!(
        "error rose at {increases}/10 switches; {rises_between_cycles} rises between cycle completions \
         ({rises_between_ticks} between ticks); {flat_ticks} flat ticks, {flat_without_cycle} of them \
         with no completed cycle; {idle_changes} error changes at idle agents"
    );
    if increases >= 9 && rises_between_cycles == 0 && flat_without_cycle > 0 && idle_changes == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn with_seeds(mut config: ExperimentConfig, seed: u64) -> ExperimentConfig {
    config.set_problem_seed(31 + seed);
    config.set_schedule_seed(7 + seed);
    config
}

fn without_noise(mut config: ExperimentConfig) -> ExperimentConfig {
    if let ProblemConfig::Feedback { noise_std, .. } = &mut config.problem {
        *noise_std = 0.0;
    }
    config
}

fn mean_agent_error(outcome: &SimulationOutcome, t: usize) -> f64 {
    let errors = &outcome.series.boundary()[t];
    errors.iter().sum::<f64>() / errors.len() as f64
}

fn noisy_feedback() -> Verdict {
    let base = load("feedback.toml");
    let seeds = 20;
    let epochs = base.build_problem().expect("feedback problem").horizon() + 1;
    let mut noisy = vec![0.0; epochs];
    let mut bound = vec![0.0; epochs];
    for seed in 0..seeds {
        let config = with_seeds(base.clone(), seed);
        let outcome = simulate(&config, None).expect("noisy run");
        let clean = simulate(&without_noise(config), None).expect("noiseless run");
        for t in 0..epochs {
            noisy[t] += mean_agent_error(&outcome, t) / seeds as f64;
            bound[t] += clean.rows[t].theorem2_bound / seeds as f64;
        }
    }
    // the first epoch starts from the shared initial point
    let mut worst: f64 = 0.0;
    let mut valid = true;
    for t in 1..epochs {
        valid &= noisy[t].is_finite() && noisy[t] > 0.0;
        worst = worst.max(noisy[t] / bound[t]);
    }
    let detail = format!(
        "{seeds}-seed mean agent error before the 8th switch {:.4} (reference value 1.192 comes from a \
         different instance); largest error / noiseless bound after epoch 0 is {worst:.3}",
        noisy[7]
    );
    if valid && worst <= 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in fs::read_dir(&d).expect("readable output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                pending.push(path);
            } else {
                let bytes = fs::read(&path).expect("readable csv");
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    files.sort();
    files
}

fn reruns_are_identical() -> Verdict {
    let mut compared = 0;
    for name in ["default_qp.toml", "feedback.toml", "enforce_rho.toml"] {
        let config = load(name);
        let mut trees = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().expect("temp dir");
            simulate(&config, Some(dir.path())).map_err(|e| format!("{name}: {e}"))?;
            if config.planner.is_some() {
                plan(&config, Some(dir.path())).map_err(|e| format!("{name}: {e}"))?;
            }
            trees.push(read_tree(dir.path()));
        }
        if trees[0] != trees[1] {
            return Err(format!("{name}: outputs differ between reruns"));
        }
        compared += trees[0].len();
    }
    Ok(format!("{compared} CSV files byte-identical across reruns of three configs"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("tracking bound over 20 problems and 3 schedules", tracking_bound_holds),
        ("per-cycle contraction within one epoch", per_cycle_contraction),
        ("cycle requirement meets the tolerance", cycle_requirement_meets_tolerance),
        ("asymptotic error ball", asymptotic_ball),
        ("planner against enumeration", planner_matches_enumeration),
        ("error shape across switches", switching_shape),
        ("noisy feedback stays near the noiseless bound", noisy_feedback),
        ("deterministic CSV output", reruns_are_identical),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let verdict = check();
        let secs = clock.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("acceptance {} PASS {name}: {detail} [{secs:.1}s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} FAIL {name}: {detail} [{secs:.1}s]", n + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
