//! Random problem families: dominant time-varying quadratics and noisy
//! feedback-optimization objectives.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    dominance, AnalysisOptions, EpochModel, FeedbackObjective, MeasurementNoise, ObjectiveEpoch,
    QuadraticObjective, TimeVaryingProblem,
};
use crate::blocks::{BoxSet, Partition};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Diagonal offset added to every generated Hessian before the dominance shift.
pub const BASE_SHIFT: f64 = 0.1;
/// Dominance margin every generated Hessian is shifted to reach.
pub const TARGET_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGenerator {
    pub block_dims: Vec<usize>,
    /// `T`; the problem has `T + 1` epochs.
    pub horizon: usize,
    pub seed: u64,
    pub drift_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGenerator {
    pub block_dims: Vec<usize>,
    pub seed: u64,
    /// `r(0), ..., r(T)`.
    pub reference: Vec<f64>,
    /// Output map `a`; drawn from the problem seed when absent.
    pub output_map: Option<Vec<f64>>,
    /// Scale of a generated output map (entries `N(0, 1) * scale / sqrt(n)`).
    pub output_scale: f64,
    pub noise_std: f64,
}

/// Box, epoch lengths and stepsize policy shared by the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSetup {
    pub lower: f64,
    pub upper: f64,
    pub kappas: Vec<usize>,
    pub analysis: AnalysisOptions,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `A^T A + (delta + m) I` with `m` the smallest shift giving dominance
/// margin `TARGET_MARGIN` for `A^T A + extra + (delta + m) I`.
fn dominant_hessian(
    rng: &mut ChaCha8Rng,
    p: &Partition,
    extra: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let n = p.total_dim();
    let a = gaussian_matrix(rng, n);
    let gram = symmetrize(a.transpose() * &a);
    let identity = DMatrix::<f64>::identity(n, n);
    let mut full = &gram + &identity * BASE_SHIFT;
    if let Some(e) = extra {
        full += e;
    }
    let shift = dominance::dominance_shift(&full, p, TARGET_MARGIN)?;
    Ok(gram + identity * (BASE_SHIFT + shift))
}

/// `Q(t), q(t)` for `t = 0..=T`, deterministic in the seed.
pub fn generate_quadratic_epochs(gen: &QuadraticGenerator) -> Result<Vec<QuadraticObjective>> {
    let p = Partition::new(gen.block_dims.clone())?;
    let n = p.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    (0..=gen.horizon)
        .map(|_| {
            let q_matrix = dominant_hessian(&mut rng, &p, None)?;
            let q_vector = DVector::from_fn(n, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * gen.drift_scale
            });
            QuadraticObjective::new(q_matrix, q_vector)
        })
        .collect()
}

pub fn generate_quadratic_problem(gen: &QuadraticGenerator, setup: &ProblemSetup) -> Result<TimeVaryingProblem> {
    let p = Partition::new(gen.block_dims.clone())?;
    let epochs = generate_quadratic_epochs(gen)?
        .into_iter()
        .enumerate()
        .map(|(t, q)| ObjectiveEpoch::quadratic(q, p.clone(), t))
        .collect::<Result<Vec<_>>>()?;
    let set = BoxSet::uniform(setup.lower, setup.upper, p)?;
    TimeVaryingProblem::build(epochs, set, &setup.kappas, &setup.analysis)
}

/// One feedback epoch `1/2 u^T Q u + 1/2 (a^T u + n(t) - r)^2`.
///
/// Gradients drawn through [`ObjectiveEpoch::gradient_sampler`] see the
/// noisy output; value, Hessian and the minimizer oracle use the noiseless
/// model.
pub fn make_feedback_objective(
    partition: Partition,
    index: usize,
    q_matrix: DMatrix<f64>,
    output_map: Vec<f64>,
    reference: f64,
    noise_std: f64,
    seed: u64,
) -> Result<ObjectiveEpoch> {
    let n = partition.total_dim();
    if q_matrix.nrows() != n || q_matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q_matrix.nrows(),
        });
    }
    if output_map.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: output_map.len(),
        });
    }
    let model = EpochModel::Feedback(FeedbackObjective {
        q_matrix,
        output_map: DVector::from_vec(output_map),
        reference,
    });
    ObjectiveEpoch::new(model, partition, index)?.with_noise(MeasurementNoise {
        std_dev: noise_std,
        seed,
    })
}

pub fn generate_feedback_problem(gen: &FeedbackGenerator, setup: &ProblemSetup) -> Result<TimeVaryingProblem> {
    if gen.reference.is_empty() {
        return Err(Error::InvalidInput("reference trajectory is empty".into()));
    }
    let p = Partition::new(gen.block_dims.clone())?;
    let n = p.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    let a = match &gen.output_map {
        Some(a) => a.clone(),
        None => {
            let scale = gen.output_scale / (n as f64).sqrt();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
                .collect()
        }
    };
    let av = DVector::from_column_slice(&a);
    let outer = &av * av.transpose();
    let mut epochs = Vec::with_capacity(gen.reference.len());
    for (t, &r) in gen.reference.iter().enumerate() {
        let q = dominant_hessian(&mut rng, &p, Some(&outer))?;
        epochs.push(make_feedback_objective(
            p.clone(),
            t,
            q,
            a.clone(),
            r,
            gen.noise_std,
            derive_seed(gen.seed, 0x6E01_5E, t as u64),
        )?);
    }
    let set = BoxSet::uniform(setup.lower, setup.upper, p)?;
    TimeVaryingProblem::build(epochs, set, &setup.kappas, &setup.analysis)
}
