//! Time-varying objectives `f(., t)`, verification of the standing
//! hypotheses on each epoch, and the per-epoch constants the bounds consume.

mod dominance;
mod generate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::blocks::{euclidean_distance, BoxSet, Partition, PartitionedVector};
use crate::error::{AssumptionViolation, Error, Hypothesis, Result};

pub use dominance::{check_block_diagonal_dominance, dominance_shift, DominanceReport};
pub use generate::{
    generate_feedback_problem, generate_quadratic_epochs, generate_quadratic_problem,
    make_feedback_objective, FeedbackGenerator, ProblemSetup, QuadraticGenerator,
};

/// A twice differentiable objective with a user-supplied Hessian.
pub trait SmoothObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64], out: &mut [f64]);
    fn hessian(&self, u: &[f64]) -> DMatrix<f64>;

    /// Gradient with respect to the coordinates in `range` only.
    fn block_gradient(&self, u: &[f64], range: std::ops::Range<usize>, out: &mut [f64]) {
        let mut full = vec![0.0; self.dim()];
        self.gradient(u, &mut full);
        out.copy_from_slice(&full[range]);
    }
}

/// `f(u) = 1/2 u^T Q u + q^T u`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub q_matrix: DMatrix<f64>,
    pub q_vector: DVector<f64>,
}

impl QuadraticObjective {
    pub fn new(q_matrix: DMatrix<f64>, q_vector: DVector<f64>) -> Result<Self> {
        if q_matrix.nrows() != q_matrix.ncols() || q_matrix.nrows() != q_vector.len() {
            return Err(Error::DimensionMismatch {
                expected: q_matrix.nrows(),
                found: q_vector.len(),
            });
        }
        Ok(Self { q_matrix, q_vector })
    }
}

/// `f(u) = 1/2 u^T Q u + 1/2 (a^T u - r)^2`, a steady-state feedback
/// objective with linear input-output map `y(u) = a^T u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackObjective {
    pub q_matrix: DMatrix<f64>,
    pub output_map: DVector<f64>,
    pub reference: f64,
}

/// Additive Gaussian error on the measured output `y(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementNoise {
    pub std_dev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum EpochModel {
    Quadratic(QuadraticObjective),
    Feedback(FeedbackObjective),
    Custom(Arc<dyn SmoothObjective>),
}

impl EpochModel {
    fn dim(&self) -> usize {
        match self {
            EpochModel::Quadratic(q) => q.q_vector.len(),
            EpochModel::Feedback(f) => f.output_map.len(),
            EpochModel::Custom(c) => c.dim(),
        }
    }
}

/// One objective `f(., t)` on a fixed block partition.
#[derive(Debug, Clone)]
pub struct ObjectiveEpoch {
    model: EpochModel,
    partition: Partition,
    index: usize,
    noise: Option<MeasurementNoise>,
}

fn quad_form_row(m: &DMatrix<f64>, row: usize, u: &[f64]) -> f64 {
    m.row(row).iter().zip(u).map(|(a, b)| a * b).sum()
}

impl ObjectiveEpoch {
    pub fn new(model: EpochModel, partition: Partition, index: usize) -> Result<Self> {
        if model.dim() != partition.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: partition.total_dim(),
                found: model.dim(),
            });
        }
        Ok(Self {
            model,
            partition,
            index,
            noise: None,
        })
    }

    pub fn quadratic(q: QuadraticObjective, partition: Partition, index: usize) -> Result<Self> {
        Self::new(EpochModel::Quadratic(q), partition, index)
    }

    pub fn with_noise(mut self, noise: MeasurementNoise) -> Result<Self> {
        if !matches!(self.model, EpochModel::Feedback(_)) {
            return Err(Error::InvalidInput(
                "measurement noise only applies to feedback objectives".into(),
            ));
        }
        if !(noise.std_dev >= 0.0 && noise.std_dev.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise standard deviation must be finite and nonnegative, got {}",
                noise.std_dev
            )));
        }
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn model(&self) -> &EpochModel {
        &self.model
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn noise(&self) -> Option<&MeasurementNoise> {
        self.noise.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.partition.total_dim()
    }

    pub fn has_constant_hessian(&self) -> bool {
        !matches!(self.model, EpochModel::Custom(_))
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match &self.model {
            EpochModel::Quadratic(q) => {
                let v = DVector::from_column_slice(u);
                0.5 * v.dot(&(&q.q_matrix * &v)) + q.q_vector.dot(&v)
            }
            EpochModel::Feedback(f) => {
                let v = DVector::from_column_slice(u);
                let y = f.output_map.dot(&v) - f.reference;
                0.5 * v.dot(&(&f.q_matrix * &v)) + 0.5 * y * y
            }
            EpochModel::Custom(c) => c.value(u),
        }
    }

    /// Noiseless gradient.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        self.block_gradient_range(u, 0..n, out);
    }

    fn block_gradient_range(&self, u: &[f64], range: std::ops::Range<usize>, out: &mut [f64]) {
        match &self.model {
            EpochModel::Quadratic(q) => {
                for (o, row) in out.iter_mut().zip(range) {
                    *o = quad_form_row(&q.q_matrix, row, u) + q.q_vector[row];
                }
            }
            EpochModel::Feedback(f) => {
                let y = f.output_map.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() - f.reference;
                for (o, row) in out.iter_mut().zip(range) {
                    *o = quad_form_row(&f.q_matrix, row, u) + f.output_map[row] * y;
                }
            }
            EpochModel::Custom(c) => c.block_gradient(u, range, out),
        }
    }

    /// Noiseless gradient with respect to block `i`.
    pub fn block_gradient(&self, u: &[f64], i: usize, out: &mut [f64]) {
        self.block_gradient_range(u, self.partition.range(i), out);
    }

    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        match &self.model {
            EpochModel::Quadratic(q) => q.q_matrix.clone(),
            EpochModel::Feedback(f) => &f.q_matrix + &f.output_map * f.output_map.transpose(),
            EpochModel::Custom(c) => c.hessian(u),
        }
    }

    /// A gradient evaluator owning a fresh copy of this epoch's noise stream.
    ///
    /// Without configured noise it returns exact gradients.
    pub fn gradient_sampler(&self) -> GradientSampler<'_> {
        let stream = match (&self.model, &self.noise) {
            (EpochModel::Feedback(_), Some(noise)) if noise.std_dev > 0.0 => Some((
                ChaCha8Rng::seed_from_u64(noise.seed),
                Normal::new(0.0, noise.std_dev).expect("validated standard deviation"),
            )),
            _ => None,
        };
        GradientSampler {
            epoch: self,
            stream,
        }
    }
}

/// Gradient evaluator as seen by an agent: with measurement noise `n(t)`,
/// `y_hat(u) = a^T u + n(t)` and each call consumes one draw.
///
/// Holds a private random stream, so calls need `&mut self`.
pub struct GradientSampler<'a> {
    epoch: &'a ObjectiveEpoch,
    stream: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl GradientSampler<'_> {
    pub fn block_gradient(&mut self, u: &[f64], i: usize, out: &mut [f64]) {
        self.epoch.block_gradient(u, i, out);
        if let Some((rng, normal)) = self.stream.as_mut() {
            let n = normal.sample(rng);
            if let EpochModel::Feedback(f) = &self.epoch.model {
                for (o, row) in out.iter_mut().zip(self.epoch.partition.range(i)) {
                    *o += f.output_map[row] * n;
                }
            }
        }
    }

    pub fn gradient(&mut self, u: &[f64], out: &mut [f64]) {
        self.epoch.gradient(u, out);
        if let Some((rng, normal)) = self.stream.as_mut() {
            let n = normal.sample(rng);
            if let EpochModel::Feedback(f) = &self.epoch.model {
                for (o, a) in out.iter_mut().zip(f.output_map.iter()) {
                    *o += a * n;
                }
            }
        }
    }
}

/// Per-epoch constants used by the update law and the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochConstants {
    /// Strong convexity modulus (dominance margin).
    pub beta: f64,
    /// Lipschitz constant of the gradient over `U`.
    pub lipschitz: f64,
    /// Right-hand side of the stepsize condition.
    pub stepsize_bound: f64,
    pub gamma: f64,
    pub q: f64,
    /// `||u_hat(t+1) - u_hat(t)||_2`; zero for the final epoch.
    pub sigma: f64,
    pub kappa: usize,
    pub minimizer: PartitionedVector,
}

/// Constants estimated from the Hessian over `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochEstimate {
    pub beta: f64,
    pub lipschitz: f64,
    pub stepsize_bound: f64,
}

pub const DEFAULT_SAMPLE_COUNT: usize = 1000;
const LIPSCHITZ_INFLATION: f64 = 1.05;
const BETA_DEFLATION: f64 = 0.95;

/// Latin-hypercube style samples of a box: every coordinate visits each of
/// `count` equal strata exactly once.
pub fn latin_hypercube(set: &BoxSet, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = set.lower().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; n]; count];
    let mut strata: Vec<usize> = (0..count).collect();
    for d in 0..n {
        for s in (1..count).rev() {
            let j = rng.random_range(0..=s);
            strata.swap(s, j);
        }
        let (lo, hi) = (set.lower()[d], set.upper()[d]);
        for (point, &s) in points.iter_mut().zip(&strata) {
            let frac = (s as f64 + rng.random::<f64>()) / count as f64;
            point[d] = lo + frac * (hi - lo);
        }
    }
    points
}

fn sample_seed(epoch: &ObjectiveEpoch) -> u64 {
    0x7A11_5EED ^ (epoch.index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn analyze_epoch(epoch: &ObjectiveEpoch, set: &BoxSet, sample_count: usize) -> Result<EpochEstimate> {
    if set.partition() != epoch.partition() {
        return Err(Error::PartitionMismatch);
    }
    let check = |u: &[f64]| -> Result<(DominanceReport, f64)> {
        let h = epoch.hessian(u);
        if !dominance::is_symmetric(&h) {
            let mut v = AssumptionViolation::new(Hypothesis::Smoothness, "Hessian is not symmetric")
                .at_epoch(epoch.index);
            v.witness = Some(u.to_vec());
            return Err(v.into());
        }
        let report = check_block_diagonal_dominance(&h, epoch.partition()).map_err(|e| match e {
            Error::Assumption(mut v) => {
                v.epoch = Some(epoch.index);
                v.witness = Some(u.to_vec());
                Error::Assumption(v)
            }
            other => other,
        })?;
        if !report.dominant {
            let mut v = AssumptionViolation::new(
                Hypothesis::BlockDominance,
                "Hessian is not strictly block diagonally dominant",
            )
            .at_epoch(epoch.index);
            v.margin = Some(report.beta);
            v.witness = Some(u.to_vec());
            return Err(v.into());
        }
        Ok((report, dominance::max_abs_eigenvalue(&h)))
    };

    let (beta, lipschitz, max_off) = if epoch.has_constant_hessian() {
        let centre: Vec<f64> = set
            .lower()
            .iter()
            .zip(set.upper())
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        let (report, norm) = check(&centre)?;
        (report.beta, norm, report.max_off_diagonal_sum)
    } else {
        let mut beta = f64::INFINITY;
        let mut lip = 0.0f64;
        let mut max_off = 0.0f64;
        for u in latin_hypercube(set, sample_count.max(1), sample_seed(epoch)) {
            let (report, norm) = check(&u)?;
            beta = beta.min(report.beta);
            lip = lip.max(norm);
            max_off = max_off.max(report.max_off_diagonal_sum);
        }
        (beta * BETA_DEFLATION, lip * LIPSCHITZ_INFLATION, max_off)
    };
    let stepsize_bound = if max_off > 0.0 { 1.0 / max_off } else { 1.0 / lipschitz };
    Ok(EpochEstimate {
        beta,
        lipschitz,
        stepsize_bound,
    })
}

/// `(beta_t, L_t)` for one epoch over `U`.
///
/// Quadratic epochs are evaluated once and are exact; other epochs are
/// sampled, with `L_t` inflated by 5% and `beta_t` deflated by 5%.
pub fn estimate_epoch_constants(epoch: &ObjectiveEpoch, set: &BoxSet, sample_count: usize) -> Result<(f64, f64)> {
    let e = analyze_epoch(epoch, set, sample_count)?;
    Ok((e.beta, e.lipschitz))
}

/// `1 / max_u max_i sum_{j != i} ||H_ij(u, t)||_2`, or `1 / L_t` when every
/// off-diagonal block vanishes.
pub fn stepsize_bound(epoch: &ObjectiveEpoch, set: &BoxSet, sample_count: usize) -> Result<f64> {
    Ok(analyze_epoch(epoch, set, sample_count)?.stepsize_bound)
}

/// `q = max{|1 - gamma beta|, |1 - gamma L|}`, required to lie in `(0, 1)`.
pub fn contraction_factor(gamma: f64, beta: f64, lipschitz: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(beta > 0.0) || !(lipschitz >= beta) {
        return Err(Error::InvalidStepsize(format!(
            "need gamma > 0 and 0 < beta <= L, got gamma = {gamma}, beta = {beta}, L = {lipschitz}"
        )));
    }
    let q = (1.0 - gamma * beta).abs().max((1.0 - gamma * lipschitz).abs());
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidStepsize(format!(
            "contraction factor {q} is outside (0, 1) for gamma = {gamma}"
        )));
    }
    Ok(q)
}

pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const ORACLE_MAX_ITERATIONS: usize = 1_000_000;

/// Minimizer of one epoch over `U` by centralized projected gradient with
/// stepsize `1 / L`, stopped once `||u - P[u - grad f(u) / L]||_2 <= 1e-10`.
pub fn minimizer_oracle(epoch: &ObjectiveEpoch, set: &BoxSet, lipschitz: f64) -> Result<PartitionedVector> {
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidInput(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    let n = epoch.dim();
    let mut u = vec![0.0; n];
    set.project_in_place(&mut u);
    let mut grad = vec![0.0; n];
    let mut next = vec![0.0; n];
    let step = 1.0 / lipschitz;
    let mut residual = f64::INFINITY;
    for _ in 0..ORACLE_MAX_ITERATIONS {
        epoch.gradient(&u, &mut grad);
        for ((x, g), y) in u.iter().zip(&grad).zip(next.iter_mut()) {
            *y = x - step * g;
        }
        set.project_in_place(&mut next);
        residual = euclidean_distance(&u, &next);
        std::mem::swap(&mut u, &mut next);
        if residual <= ORACLE_TOLERANCE {
            return PartitionedVector::new(u, epoch.partition().clone());
        }
    }
    Err(Error::Convergence {
        iterations: ORACLE_MAX_ITERATIONS,
        residual,
    })
}

/// How the stepsize of each epoch is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// `gamma_t = fraction * min{stepsize bound, 1 / L_t}`.
    pub stepsize_fraction: f64,
    pub sample_count: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            stepsize_fraction: 0.5,
            sample_count: DEFAULT_SAMPLE_COUNT,
        }
    }
}

/// Epochs `f(., 0), ..., f(., T)` on one constraint set, with their verified
/// constants.
#[derive(Debug, Clone)]
pub struct TimeVaryingProblem {
    constraint: BoxSet,
    epochs: Vec<ObjectiveEpoch>,
    constants: Vec<EpochConstants>,
}

impl TimeVaryingProblem {
    /// Verify every epoch and compute its constants. `kappas` holds either
    /// one tick count for all epochs or one per epoch.
    pub fn build(
        epochs: Vec<ObjectiveEpoch>,
        constraint: BoxSet,
        kappas: &[usize],
        options: &AnalysisOptions,
    ) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::InvalidInput("a problem needs at least one epoch".into()));
        }
        let zeta = options.stepsize_fraction;
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::InvalidStepsize(format!(
                "stepsize fraction must lie in (0, 1), got {zeta}"
            )));
        }
        let kappas = expand_kappas(kappas, epochs.len())?;
        for (t, e) in epochs.iter().enumerate() {
            if e.partition() != constraint.partition() {
                return Err(Error::PartitionMismatch);
            }
            if e.index != t {
                return Err(Error::InvalidInput(format!(
                    "epoch at position {t} carries index {}",
                    e.index
                )));
            }
        }
        let mut constants = Vec::with_capacity(epochs.len());
        for (epoch, kappa) in epochs.iter().zip(kappas) {
            let est = analyze_epoch(epoch, &constraint, options.sample_count)?;
            let gamma = zeta * est.stepsize_bound.min(1.0 / est.lipschitz);
            let q = contraction_factor(gamma, est.beta, est.lipschitz)?;
            let minimizer = minimizer_oracle(epoch, &constraint, est.lipschitz)?;
            constants.push(EpochConstants {
                beta: est.beta,
                lipschitz: est.lipschitz,
                stepsize_bound: est.stepsize_bound,
                gamma,
                q,
                sigma: 0.0,
                kappa,
                minimizer,
            });
        }
        for t in 0..constants.len() - 1 {
            constants[t].sigma = euclidean_distance(
                constants[t + 1].minimizer.as_slice(),
                constants[t].minimizer.as_slice(),
            );
        }
        Ok(Self {
            constraint,
            epochs,
            constants,
        })
    }

    pub fn partition(&self) -> &Partition {
        self.constraint.partition()
    }

    pub fn constraint(&self) -> &BoxSet {
        &self.constraint
    }

    pub fn epochs(&self) -> &[ObjectiveEpoch] {
        &self.epochs
    }

    pub fn constants(&self) -> &[EpochConstants] {
        &self.constants
    }

    pub fn num_agents(&self) -> usize {
        self.partition().num_blocks()
    }

    /// `T`, the index of the final epoch.
    pub fn horizon(&self) -> usize {
        self.epochs.len() - 1
    }

    pub fn kappas(&self) -> Vec<usize> {
        self.constants.iter().map(|c| c.kappa).collect()
    }

    /// Same problem with different epoch lengths.
    pub fn with_kappas(&self, kappas: &[usize]) -> Result<Self> {
        let kappas = expand_kappas(kappas, self.epochs.len())?;
        let mut out = self.clone();
        for (c, k) in out.constants.iter_mut().zip(kappas) {
            c.kappa = k;
        }
        Ok(out)
    }

    /// `eta_t`: ticks elapsed by the end of epoch `t`.
    pub fn epoch_end(&self, t: usize) -> usize {
        self.constants[..=t].iter().map(|c| c.kappa).sum()
    }

    pub fn total_ticks(&self) -> usize {
        self.epoch_end(self.horizon())
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.constants.iter().map(|c| c.q).collect()
    }

    /// `sigma_0 .. sigma_{T-1}`.
    pub fn sigmas(&self) -> Vec<f64> {
        self.constants[..self.horizon()].iter().map(|c| c.sigma).collect()
    }

    pub fn minimizer(&self, t: usize) -> &PartitionedVector {
        &self.constants[t].minimizer
    }
}

fn expand_kappas(kappas: &[usize], epochs: usize) -> Result<Vec<usize>> {
    let out = match kappas.len() {
        1 => vec![kappas[0]; epochs],
        n if n == epochs => kappas.to_vec(),
        n => {
            return Err(Error::InvalidInput(format!(
                "expected 1 or {epochs} epoch lengths, got {n}"
            )))
        }
    };
    if out.iter().any(|&k| k == 0) {
        return Err(Error::InvalidInput("every epoch needs at least one tick".into()));
    }
    Ok(out)
}

/// `sigma_t = ||u_hat(t+1) - u_hat(t)||_2`.
pub fn minimizer_drift(problem: &TimeVaryingProblem, t: usize) -> Result<f64> {
    if t >= problem.horizon() {
        return Err(Error::OutOfRange {
            what: "epoch",
            index: t,
            limit: problem.horizon(),
        });
    }
    Ok(euclidean_distance(
        problem.minimizer(t + 1).as_slice(),
        problem.minimizer(t).as_slice(),
    ))
}

#[cfg(test)]
mod tests;
