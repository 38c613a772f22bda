//! TOML experiment configuration. Unknown keys are rejected.
//!
//! ```toml
//! kappa = 50
//! stepsize_fraction = 0.5
//!
//! [problem]
//! kind = "random_quadratic"
//! seed = 7
//! block_dims = [2, 2, 2]
//! horizon = 9
//! lower = -10.0
//! upper = 10.0
//!
//! [schedule]
//! mode = "bernoulli"
//! p_compute = 0.5
//! seed = 11
//! communicate = { kind = "uniform", low = 0.1, high = 0.9 }
//! delay = { kind = "zero" }
//!
//! [output]
//! dir = "out"
//!
//! [planner]
//! budget = 20
//! c_min = 1
//! rho = 0.5
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blocks::{BoxSet, Partition, PartitionedVector};
use crate::error::{Error, Result};
use crate::objectives::{
    generate_feedback_problem, generate_quadratic_problem, make_feedback_objective, AnalysisOptions,
    EpochModel, FeedbackGenerator, ObjectiveEpoch, ProblemSetup, QuadraticGenerator, QuadraticObjective,
    TimeVaryingProblem, DEFAULT_SAMPLE_COUNT,
};
use crate::planner::DriftTerm;
use crate::simulator::{CommunicationRegime, DelayModel, Schedule};

fn default_stepsize_fraction() -> f64 {
    0.5
}

fn default_sample_count() -> usize {
    DEFAULT_SAMPLE_COUNT
}

fn default_scale() -> f64 {
    1.0
}

fn default_c_min() -> u64 {
    1
}

fn default_max_ticks() -> usize {
    10_000
}

fn default_delay() -> DelayModel {
    DelayModel::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Ticks per epoch: one value for all epochs or one per epoch.
    pub kappa: Kappa,
    #[serde(default = "default_stepsize_fraction")]
    pub stepsize_fraction: f64,
    /// Hessian samples per epoch for non-quadratic objectives.
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    /// Starting point shared by all agents; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Fill>,
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Kappa {
    Uniform(usize),
    PerEpoch(Vec<usize>),
}

impl Kappa {
    pub fn as_list(&self) -> Vec<usize> {
        match self {
            Kappa::Uniform(k) => vec![*k],
            Kappa::PerEpoch(ks) => ks.clone(),
        }
    }
}

/// One value for every coordinate, or one per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl Fill {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Fill::Uniform(x) => Ok(vec![*x; n]),
            Fill::PerCoordinate(v) if v.len() == n => Ok(v.clone()),
            Fill::PerCoordinate(v) => Err(Error::Config(format!(
                "expected {n} coordinates, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Dominant random quadratics `1/2 u^T Q(t) u + q(t)^T u`.
    RandomQuadratic {
        seed: u64,
        block_dims: Vec<usize>,
        /// `T`; there are `T + 1` epochs.
        horizon: usize,
        #[serde(default = "default_scale")]
        drift_scale: f64,
        lower: f64,
        upper: f64,
    },
    /// Feedback objectives `1/2 u^T Q(t) u + 1/2 (a^T u - r(t))^2` whose
    /// gradients see a noisy output measurement.
    Feedback {
        seed: u64,
        block_dims: Vec<usize>,
        /// `r(0), ..., r(T)`.
        reference: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_map: Option<Vec<f64>>,
        #[serde(default = "default_scale")]
        output_scale: f64,
        #[serde(default)]
        noise_std: f64,
        lower: f64,
        upper: f64,
    },
    /// Fully written-out epochs.
    Explicit {
        block_dims: Vec<usize>,
        lower: Fill,
        upper: Fill,
        #[serde(default)]
        noise_std: f64,
        epochs: Vec<EpochConfig>,
    },
}

/// A quadratic epoch (`q_vector`) or a feedback epoch (`output_map` and
/// `reference`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochConfig {
    pub q_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_map: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Synchronous,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mode: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_compute: Option<f64>,
    /// Defaults to `p_i(k) ~ Uniform(0.1, 0.9)` redrawn every tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communicate: Option<CommunicationRegime>,
    #[serde(default = "default_delay")]
    pub delay: DelayModel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Total cycle budget `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Smallest cycle count allowed per epoch, 0 or 1.
    #[serde(default = "default_c_min")]
    pub c_min: u64,
    /// Error target; `inf` asks for the minimal plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default)]
    pub drift_term: DriftTerm,
    /// Re-simulate until every epoch completes its planned cycles.
    #[serde(default)]
    pub enforce: bool,
    #[serde(default = "default_max_ticks")]
    pub max_ticks_per_epoch: usize,
}

pub const DEFAULT_COMMUNICATION: CommunicationRegime = CommunicationRegime::Uniform { low: 0.1, high: 0.9 };

fn open_unit(what: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("{what} must lie in (0, 1], got {p}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Range checks serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let kappas = self.kappa.as_list();
        if kappas.is_empty() || kappas.contains(&0) {
            return Err(Error::Config("every epoch needs at least one tick".into()));
        }
        if !(self.stepsize_fraction > 0.0 && self.stepsize_fraction < 1.0) {
            return Err(Error::Config(format!(
                "stepsize_fraction must lie in (0, 1), got {}",
                self.stepsize_fraction
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be positive".into()));
        }
        self.schedule()?;
        if let ProblemConfig::Feedback { reference, .. } = &self.problem {
            if reference.is_empty() {
                return Err(Error::Config("reference needs at least one value".into()));
            }
        }
        if let ProblemConfig::Explicit { epochs, .. } = &self.problem {
            if epochs.is_empty() {
                return Err(Error::Config("explicit problems need at least one epoch".into()));
            }
        }
        if let Some(p) = &self.planner {
            if p.c_min > 1 {
                return Err(Error::Config(format!("c_min must be 0 or 1, got {}", p.c_min)));
            }
            if let Some(rho) = p.rho {
                if !(rho > 0.0) {
                    return Err(Error::Config(format!("rho must be positive, got {rho}")));
                }
            }
            if p.max_ticks_per_epoch == 0 {
                return Err(Error::Config("max_ticks_per_epoch must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = &self.schedule;
        match s.mode {
            ScheduleKind::Synchronous => {
                if s.p_compute.is_some() || s.communicate.is_some() {
                    return Err(Error::Config(
                        "synchronous schedules take no p_compute or communicate".into(),
                    ));
                }
                Ok(Schedule::synchronous(s.delay, s.seed))
            }
            ScheduleKind::Bernoulli => {
                let p_compute = s
                    .p_compute
                    .ok_or_else(|| Error::Config("bernoulli schedules need p_compute".into()))?;
                open_unit("p_compute", p_compute)?;
                let communicate = s.communicate.unwrap_or(DEFAULT_COMMUNICATION);
                match communicate {
                    CommunicationRegime::Fixed { p } => open_unit("communication probability", p)?,
                    CommunicationRegime::Uniform { low, high } => {
                        open_unit("communication low", low)?;
                        open_unit("communication high", high)?;
                    }
                }
                let schedule = Schedule::bernoulli(p_compute, communicate, s.delay, s.seed);
                schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(schedule)
            }
        }
    }

    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            stepsize_fraction: self.stepsize_fraction,
            sample_count: self.sample_count,
        }
    }

    /// Replace the seed of a generated problem; explicit problems have none.
    pub fn set_problem_seed(&mut self, new: u64) {
        match &mut self.problem {
            ProblemConfig::RandomQuadratic { seed, .. } | ProblemConfig::Feedback { seed, .. } => *seed = new,
            ProblemConfig::Explicit { .. } => {}
        }
    }

    pub fn set_schedule_seed(&mut self, new: u64) {
        self.schedule.seed = new;
    }

    /// Generate or load the problem and verify every epoch.
    pub fn build_problem(&self) -> Result<TimeVaryingProblem> {
        let kappas = self.kappa.as_list();
        let setup = |lower: f64, upper: f64| ProblemSetup {
            lower,
            upper,
            kappas: kappas.clone(),
            analysis: self.analysis(),
        };
        match &self.problem {
            ProblemConfig::RandomQuadratic {
                seed,
                block_dims,
                horizon,
                drift_scale,
                lower,
                upper,
            } => {
                let gen = QuadraticGenerator {
                    block_dims: block_dims.clone(),
                    horizon: *horizon,
                    seed: *seed,
                    drift_scale: *drift_scale,
                };
                generate_quadratic_problem(&gen, &setup(*lower, *upper))
            }
            ProblemConfig::Feedback {
                seed,
                block_dims,
                reference,
                output_map,
                output_scale,
                noise_std,
                lower,
                upper,
            } => {
                let gen = FeedbackGenerator {
                    block_dims: block_dims.clone(),
                    seed: *seed,
                    reference: reference.clone(),
                    output_map: output_map.clone(),
                    output_scale: *output_scale,
                    noise_std: *noise_std,
                };
                generate_feedback_problem(&gen, &setup(*lower, *upper))
            }
            ProblemConfig::Explicit {
                block_dims,
                lower,
                upper,
                noise_std,
                epochs,
            } => {
                let p = Partition::new(block_dims.clone())?;
                let n = p.total_dim();
                let set = BoxSet::new(lower.expand(n)?, upper.expand(n)?, p.clone())?;
                let built = epochs
                    .iter()
                    .enumerate()
                    .map(|(t, e)| e.build(&p, t, *noise_std))
                    .collect::<Result<Vec<_>>>()?;
                TimeVaryingProblem::build(built, set, &kappas, &self.analysis())
            }
        }
    }

    /// One starting vector per agent.
    pub fn initial_vectors(&self, problem: &TimeVaryingProblem) -> Result<Vec<PartitionedVector>> {
        let p = problem.partition().clone();
        let data = match &self.initial {
            Some(fill) => fill.expand(p.total_dim())?,
            None => vec![0.0; p.total_dim()],
        };
        let u0 = PartitionedVector::new(data, p)?;
        Ok(vec![u0; problem.num_agents()])
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("q_matrix must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl EpochConfig {
    fn build(&self, p: &Partition, t: usize, noise_std: f64) -> Result<ObjectiveEpoch> {
        let n = p.total_dim();
        let q_matrix = matrix_from_rows(&self.q_matrix, n)?;
        match (&self.q_vector, &self.output_map, self.reference) {
            (Some(q), None, None) => {
                if q.len() != n {
                    return Err(Error::Config(format!("q_vector must have {n} entries")));
                }
                let q = QuadraticObjective::new(q_matrix, DVector::from_column_slice(q))?;
                ObjectiveEpoch::quadratic(q, p.clone(), t)
            }
            (None, Some(a), Some(r)) => make_feedback_objective(
                p.clone(),
                t,
                q_matrix,
                a.clone(),
                r,
                noise_std,
                self.noise_seed.unwrap_or(t as u64),
            ),
            _ => Err(Error::Config(format!(
                "epoch {t} needs either q_vector or both output_map and reference"
            ))),
        }
    }
}

impl ProblemConfig {
    /// Write a built problem out as an explicit problem.
    pub fn from_problem(problem: &TimeVaryingProblem) -> Result<Self> {
        let mut noise_std = 0.0;
        let epochs = problem
            .epochs()
            .iter()
            .map(|e| {
                if let Some(n) = e.noise() {
                    noise_std = n.std_dev;
                }
                match e.model() {
                    EpochModel::Quadratic(q) => Ok(EpochConfig {
                        q_matrix: rows_of(&q.q_matrix),
                        q_vector: Some(q.q_vector.iter().copied().collect()),
                        output_map: None,
                        reference: None,
                        noise_seed: None,
                    }),
                    EpochModel::Feedback(f) => Ok(EpochConfig {
                        q_matrix: rows_of(&f.q_matrix),
                        q_vector: None,
                        output_map: Some(f.output_map.iter().copied().collect()),
                        reference: Some(f.reference),
                        noise_seed: e.noise().map(|n| n.seed),
                    }),
                    EpochModel::Custom(_) => Err(Error::Config(
                        "custom objectives cannot be written to a config".into(),
                    )),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let set = problem.constraint();
        Ok(ProblemConfig::Explicit {
            block_dims: problem.partition().block_dims().to_vec(),
            lower: Fill::PerCoordinate(set.lower().to_vec()),
            upper: Fill::PerCoordinate(set.upper().to_vec()),
            noise_std,
            epochs,
        })
    }
}

/// The problem written in the explicit schema, as TOML.
pub fn problem_to_toml(problem: &TimeVaryingProblem) -> Result<String> {
    #[derive(Serialize)]
    struct Wrapper {
        problem: ProblemConfig,
    }
    toml::to_string(&Wrapper {
        problem: ProblemConfig::from_problem(problem)?,
    })
    .map_err(|e| Error::Config(e.to_string()))
}
