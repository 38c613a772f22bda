use super::*;
use proptest::prelude::*;

fn quad_epoch(q: &[f64], lin: &[f64], dims: Vec<usize>) -> ObjectiveEpoch {
    let n = lin.len();
    let qo = QuadraticObjective::new(DMatrix::from_row_slice(n, n, q), DVector::from_column_slice(lin)).unwrap();
    ObjectiveEpoch::quadratic(qo, Partition::new(dims).unwrap(), 0).unwrap()
}

fn unit_box(p: &Partition, lo: f64, hi: f64) -> BoxSet {
    BoxSet::uniform(lo, hi, p.clone()).unwrap()
}

fn fd_gradient(epoch: &ObjectiveEpoch, u: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..u.len())
        .map(|k| {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[k] += h;
            dn[k] -= h;
            (epoch.value(&up) - epoch.value(&dn)) / (2.0 * h)
        })
        .collect()
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

/// Quadratic plus a separable quartic: the Hessian varies with `u`.
#[derive(Debug)]
struct Quartic {
    q: DMatrix<f64>,
    eps: f64,
}

impl SmoothObjective for Quartic {
    fn dim(&self) -> usize {
        self.q.nrows()
    }
    fn value(&self, u: &[f64]) -> f64 {
        let v = DVector::from_column_slice(u);
        0.5 * v.dot(&(&self.q * &v)) + self.eps * u.iter().map(|x| x.powi(4)).sum::<f64>() / 12.0
    }
    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let v = DVector::from_column_slice(u);
        let g = &self.q * &v;
        for k in 0..u.len() {
            out[k] = g[k] + self.eps * u[k].powi(3) / 3.0;
        }
    }
    fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let mut h = self.q.clone();
        for k in 0..u.len() {
            h[(k, k)] += self.eps * u[k] * u[k];
        }
        h
    }
}

fn setup(kappa: usize) -> ProblemSetup {
    ProblemSetup {
        lower: -5.0,
        upper: 5.0,
        kappas: vec![kappa],
        analysis: AnalysisOptions::default(),
    }
}

#[test]
fn quadratic_constants_are_exact() {
    let e = quad_epoch(&[2.0, 0.5, 0.5, 2.0], &[0.0, 0.0], vec![1, 1]);
    let set = unit_box(e.partition(), -1.0, 1.0);
    let (beta, lip) = estimate_epoch_constants(&e, &set, 10).unwrap();
    assert!((beta - 1.5).abs() < 1e-12);
    assert!((lip - 2.5).abs() < 1e-12);
    assert!((stepsize_bound(&e, &set, 10).unwrap() - 2.0).abs() < 1e-12);

    let id = quad_epoch(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], vec![1, 1]);
    let (beta, lip) = estimate_epoch_constants(&id, &set, 10).unwrap();
    assert!((beta - 1.0).abs() < 1e-12 && (lip - 1.0).abs() < 1e-12);
}

#[test]
fn block_diagonal_hessian_falls_back_to_inverse_lipschitz() {
    let e = quad_epoch(
        &[3.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 2.0],
        &[0.0; 3],
        vec![2, 1],
    );
    let set = unit_box(e.partition(), -1.0, 1.0);
    let (_, lip) = estimate_epoch_constants(&e, &set, 10).unwrap();
    assert!((lip - 4.0).abs() < 1e-12);
    assert!((stepsize_bound(&e, &set, 10).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn non_dominant_epoch_reports_witness() {
    let e = quad_epoch(&[1.0, 2.0, 2.0, 1.0], &[0.0, 0.0], vec![1, 1]);
    let set = unit_box(e.partition(), -1.0, 1.0);
    match estimate_epoch_constants(&e, &set, 10) {
        Err(Error::Assumption(v)) => {
            assert_eq!(v.hypothesis, Hypothesis::BlockDominance);
            assert!((v.margin.unwrap() + 1.0).abs() < 1e-12);
            assert!(v.witness.is_some());
        }
        other => panic!("expected violation, got {other:?}"),
    }
}

#[test]
fn sampled_constants_cover_u_dependent_hessians() {
    let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
    let model = EpochModel::Custom(Arc::new(Quartic { q, eps: 1.0 }));
    let p = Partition::new(vec![1, 1]).unwrap();
    let e = ObjectiveEpoch::new(model, p.clone(), 0).unwrap();
    let set = unit_box(&p, -1.0, 1.0);
    let (beta, lip) = estimate_epoch_constants(&e, &set, 1000).unwrap();
    // margins are 1.5 + u_k^2 >= 1.5; largest eigenvalue < 2.5 + 1
    assert!(beta > 0.95 * 1.5 - 1e-12 && beta < 0.95 * 1.5 + 0.01);
    assert!(lip > 1.05 * 3.4 && lip <= 1.05 * 3.5 + 1e-12);
    assert!((stepsize_bound(&e, &set, 1000).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn latin_hypercube_hits_every_stratum() {
    let p = Partition::new(vec![2, 1]).unwrap();
    let set = unit_box(&p, -2.0, 2.0);
    let pts = latin_hypercube(&set, 50, 3);
    for d in 0..3 {
        let mut seen = vec![false; 50];
        for x in &pts {
            assert!(set.contains(x));
            let s = (((x[d] + 2.0) / 4.0) * 50.0).floor() as usize;
            seen[s.min(49)] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }
}

#[test]
fn contraction_factor_examples() {
    assert!((contraction_factor(0.1, 1.0, 5.0).unwrap() - 0.9).abs() < 1e-12);
    assert!((contraction_factor(0.4, 1.5, 2.5).unwrap() - 0.4).abs() < 1e-12);
    // q = 0 at gamma = 1 / L with beta = L
    assert!(matches!(contraction_factor(0.5, 2.0, 2.0), Err(Error::InvalidStepsize(_))));
    assert!(matches!(contraction_factor(1.0, 1.5, 2.5), Err(Error::InvalidStepsize(_))));
    assert!(contraction_factor(-0.1, 1.0, 2.0).is_err());
    assert!(contraction_factor(0.1, 3.0, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn contraction_factor_inside_unit_interval(beta in 0.01f64..5.0, spread in 1.0f64..20.0, bound in 0.01f64..10.0, frac in 0.001f64..0.999) {
        let lip = beta * spread;
        let gamma = frac * bound.min(2.0 / (beta + lip));
        let q = contraction_factor(gamma, beta, lip);
        if let Ok(q) = q {
            prop_assert!(q > 0.0 && q < 1.0);
        } else {
            // only the exact q = 0 corner may be rejected
            prop_assert!(((1.0 - gamma * beta).abs().max((1.0 - gamma * lip).abs())) == 0.0);
        }
    }
}

#[test]
fn oracle_interior_and_clamped() {
    let p = Partition::new(vec![2, 1]).unwrap();
    let id: Vec<f64> = DMatrix::<f64>::identity(3, 3).iter().copied().collect();
    let e = quad_epoch(&id, &[0.0; 3], vec![2, 1]);
    let u = minimizer_oracle(&e, &unit_box(&p, -1.0, 1.0), 1.0).unwrap();
    assert!(u.as_slice().iter().all(|x| x.abs() < 1e-10));
    let e = quad_epoch(&id, &[-2.0; 3], vec![2, 1]);
    let u = minimizer_oracle(&e, &unit_box(&p, 0.0, 1.0), 1.0).unwrap();
    assert!(u.as_slice().iter().all(|x| (x - 1.0).abs() < 1e-10));
}

fn generator(seed: u64, dims: Vec<usize>, horizon: usize) -> QuadraticGenerator {
    QuadraticGenerator {
        block_dims: dims,
        horizon,
        seed,
        drift_scale: 1.0,
    }
}

#[test]
fn oracle_matches_linear_solve_on_interior_optimum() {
    for seed in 0..5 {
        let gen = QuadraticGenerator {
            drift_scale: 0.1,
            ..generator(seed, vec![2, 3, 1], 2)
        };
        let problem = generate_quadratic_problem(&gen, &setup(10)).unwrap();
        for (t, q) in generate_quadratic_epochs(&gen).unwrap().iter().enumerate() {
            let exact = q.q_matrix.clone().lu().solve(&(-&q.q_vector)).unwrap();
            assert!(exact.iter().all(|x| x.abs() < 5.0), "optimum not interior");
            let got = problem.minimizer(t).as_slice();
            for (a, b) in got.iter().zip(exact.iter()) {
                assert!((a - b).abs() < 1e-8, "seed {seed} epoch {t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn drift_examples() {
    let p = Partition::new(vec![1, 1]).unwrap();
    let make = |lin: [f64; 2], t: usize| {
        let q = QuadraticObjective::new(DMatrix::identity(2, 2), DVector::from_column_slice(&lin)).unwrap();
        ObjectiveEpoch::quadratic(q, p.clone(), t).unwrap()
    };
    let set = unit_box(&p, -5.0, 5.0);
    let same = TimeVaryingProblem::build(
        vec![make([0.5, 0.5], 0), make([0.5, 0.5], 1)],
        set.clone(),
        &[3],
        &AnalysisOptions::default(),
    )
    .unwrap();
    assert!(minimizer_drift(&same, 0).unwrap() < 1e-9);
    let moved = TimeVaryingProblem::build(
        vec![make([0.5, 0.5], 0), make([-0.5, 0.5], 1)],
        set,
        &[3],
        &AnalysisOptions::default(),
    )
    .unwrap();
    assert!((minimizer_drift(&moved, 0).unwrap() - 1.0).abs() < 1e-9);
    assert!(matches!(minimizer_drift(&moved, 1), Err(Error::OutOfRange { .. })));
}

#[test]
fn drift_matches_linear_solves() {
    let gen = QuadraticGenerator {
        drift_scale: 0.2,
        ..generator(11, vec![2, 2, 2], 4)
    };
    let problem = generate_quadratic_problem(&gen, &setup(5)).unwrap();
    let epochs = generate_quadratic_epochs(&gen).unwrap();
    let solve = |q: &QuadraticObjective| q.q_matrix.clone().lu().solve(&(-&q.q_vector)).unwrap();
    for t in 0..4 {
        let expect = (solve(&epochs[t + 1]) - solve(&epochs[t])).norm();
        assert!((minimizer_drift(&problem, t).unwrap() - expect).abs() < 1e-8);
        assert_eq!(problem.constants()[t].sigma, minimizer_drift(&problem, t).unwrap());
    }
    assert_eq!(problem.sigmas().len(), 4);
}

#[test]
fn generated_epochs_are_dominant_and_deterministic() {
    let gen = generator(42, vec![2; 15], 10);
    let a = generate_quadratic_epochs(&gen).unwrap();
    let b = generate_quadratic_epochs(&gen).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 11);
    let p = Partition::new(gen.block_dims.clone()).unwrap();
    for q in &a {
        let r = check_block_diagonal_dominance(&q.q_matrix, &p).unwrap();
        assert!(r.dominant);
        assert!(r.beta >= TARGET_MARGIN_FOR_TESTS - 1e-9);
    }
    let other = generate_quadratic_epochs(&generator(43, vec![2; 15], 10)).unwrap();
    assert_ne!(a, other);
}

const TARGET_MARGIN_FOR_TESTS: f64 = generate::TARGET_MARGIN;

#[test]
fn generated_problem_constants_are_consistent() {
    let problem = generate_quadratic_problem(&generator(5, vec![2, 1, 3], 3), &setup(7)).unwrap();
    assert_eq!(problem.horizon(), 3);
    assert_eq!(problem.total_ticks(), 28);
    assert_eq!(problem.epoch_end(1), 14);
    for c in problem.constants() {
        assert!(c.beta > 0.0 && c.beta <= c.lipschitz);
        assert!(c.gamma < c.stepsize_bound);
        assert!(c.gamma * c.lipschitz < 1.0);
        assert!((c.q - (1.0 - c.gamma * c.beta)).abs() < 1e-15);
        assert!(c.q > 0.0 && c.q < 1.0);
    }
}

#[test]
fn stepsize_bound_is_positive_on_random_instances() {
    for seed in 0..100 {
        let gen = generator(seed, vec![1, 2, 1], 0);
        let q = generate_quadratic_epochs(&gen).unwrap().remove(0);
        let p = Partition::new(gen.block_dims.clone()).unwrap();
        let e = ObjectiveEpoch::quadratic(q, p.clone(), 0).unwrap();
        let b = stepsize_bound(&e, &unit_box(&p, -1.0, 1.0), 10).unwrap();
        assert!(b > 0.0 && b.is_finite());
    }
}

#[test]
fn lambda_min_dominates_beta_at_sampled_points() {
    let problem = generate_quadratic_problem(&generator(9, vec![2, 2, 1], 2), &setup(3)).unwrap();
    for (epoch, c) in problem.epochs().iter().zip(problem.constants()) {
        for u in latin_hypercube(problem.constraint(), 100, 77) {
            let lmin = epoch.hessian(&u).symmetric_eigen().eigenvalues.min();
            assert!(lmin >= c.beta - 1e-9);
        }
    }
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let problem = generate_quadratic_problem(&generator(2, vec![1, 2], 1), &setup(3)).unwrap();
    let pts = latin_hypercube(problem.constraint(), 10, 5);
    for epoch in problem.epochs() {
        for u in &pts {
            let mut g = vec![0.0; 3];
            epoch.gradient(u, &mut g);
            assert!(rel_close(&g, &fd_gradient(epoch, u), 1e-5));
            let h = epoch.hessian(u);
            assert!(dominance::is_symmetric(&h));
            for k in 0..3 {
                let mut up = u.clone();
                up[k] += 1e-6;
                let mut gu = vec![0.0; 3];
                epoch.gradient(&up, &mut gu);
                let col: Vec<f64> = gu.iter().zip(&g).map(|(a, b)| (a - b) / 1e-6).collect();
                let hc: Vec<f64> = h.column(k).iter().copied().collect();
                assert!(rel_close(&col, &hc, 1e-5));
            }
        }
    }
}

#[test]
fn oracle_is_a_projected_gradient_fixed_point() {
    let problem = generate_quadratic_problem(
        &QuadraticGenerator {
            drift_scale: 10.0,
            ..generator(3, vec![2, 2], 2)
        },
        &setup(3),
    )
    .unwrap();
    for (epoch, c) in problem.epochs().iter().zip(problem.constants()) {
        let u = c.minimizer.as_slice();
        for gamma in [c.gamma, 0.5 / c.lipschitz, 0.9 / c.lipschitz] {
            let mut g = vec![0.0; u.len()];
            epoch.gradient(u, &mut g);
            let mut step: Vec<f64> = u.iter().zip(&g).map(|(x, d)| x - gamma * d).collect();
            problem.constraint().project_in_place(&mut step);
            assert!(euclidean_distance(&step, u) < 1e-9);
        }
    }
}

fn feedback_epoch(noise_std: f64, seed: u64) -> ObjectiveEpoch {
    let p = Partition::new(vec![1, 2]).unwrap();
    let q = DMatrix::from_row_slice(3, 3, &[3.0, 0.2, 0.1, 0.2, 3.0, 0.3, 0.1, 0.3, 3.0]);
    make_feedback_objective(p, 0, q, vec![0.5, -0.25, 1.0], 2.0, noise_std, seed).unwrap()
}

#[test]
fn noiseless_feedback_gradient_matches_finite_differences() {
    let e = feedback_epoch(0.0, 1);
    let mut sampler = e.gradient_sampler();
    let u = [0.3, -0.7, 1.1];
    let mut g = vec![0.0; 3];
    sampler.gradient(&u, &mut g);
    assert!(rel_close(&g, &fd_gradient(&e, &u), 1e-5));
    let mut b = vec![0.0; 2];
    sampler.block_gradient(&u, 1, &mut b);
    assert!(rel_close(&b, &g[1..], 1e-12));
}

#[test]
fn feedback_accepts_large_noise() {
    let e = feedback_epoch(1000.0, 1);
    assert_eq!(e.noise().unwrap().std_dev, 1000.0);
    let mut s = e.gradient_sampler();
    let mut g = vec![0.0; 3];
    s.gradient(&[0.0; 3], &mut g);
    assert!(g.iter().all(|x| x.is_finite()));
    let p = Partition::new(vec![1, 2]).unwrap();
    let q = DMatrix::identity(3, 3);
    assert!(make_feedback_objective(p, 0, q, vec![1.0; 3], 0.0, -1.0, 1).is_err());
}

#[test]
fn noisy_feedback_gradient_is_unbiased() {
    let e = feedback_epoch(3.0, 99);
    let u = [0.3, -0.7, 1.1];
    let mut exact = vec![0.0; 3];
    e.gradient(&u, &mut exact);
    let draws = 100_000;
    let mut sampler = e.gradient_sampler();
    let mut sum = [0.0; 3];
    let mut sumsq = [0.0; 3];
    let mut g = vec![0.0; 3];
    for _ in 0..draws {
        sampler.gradient(&u, &mut g);
        for k in 0..3 {
            sum[k] += g[k];
            sumsq[k] += g[k] * g[k];
        }
    }
    for k in 0..3 {
        let mean = sum[k] / draws as f64;
        let var = sumsq[k] / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        assert!((mean - exact[k]).abs() <= 3.0 * se, "coord {k}: {mean} vs {}", exact[k]);
    }
}

#[test]
fn noise_stream_restarts_per_sampler() {
    let e = feedback_epoch(10.0, 5);
    let draw = || {
        let mut s = e.gradient_sampler();
        let mut g = vec![0.0; 3];
        s.gradient(&[0.0; 3], &mut g);
        s.gradient(&[0.0; 3], &mut g);
        g
    };
    assert_eq!(draw(), draw());
}

#[test]
fn feedback_problem_verifies_on_noiseless_model() {
    let gen = FeedbackGenerator {
        block_dims: vec![2; 4],
        seed: 8,
        reference: vec![1.0, -2.0, 3.0],
        output_map: None,
        output_scale: 1.0,
        noise_std: 1000.0,
    };
    let problem = generate_feedback_problem(&gen, &setup(5)).unwrap();
    assert_eq!(problem.horizon(), 2);
    for c in problem.constants() {
        assert!(c.beta >= TARGET_MARGIN_FOR_TESTS - 1e-9);
    }
}

#[test]
fn build_rejects_bad_inputs() {
    let e = quad_epoch(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], vec![1, 1]);
    let set = unit_box(e.partition(), -1.0, 1.0);
    let bad_zeta = AnalysisOptions {
        stepsize_fraction: 1.0,
        ..AnalysisOptions::default()
    };
    assert!(TimeVaryingProblem::build(vec![e.clone()], set.clone(), &[3], &bad_zeta).is_err());
    assert!(TimeVaryingProblem::build(vec![e.clone()], set.clone(), &[0], &AnalysisOptions::default()).is_err());
    assert!(TimeVaryingProblem::build(vec![e.clone()], set.clone(), &[3, 4], &AnalysisOptions::default()).is_err());
    let other = unit_box(&Partition::new(vec![2]).unwrap(), -1.0, 1.0);
    assert!(TimeVaryingProblem::build(vec![e], other, &[3], &AnalysisOptions::default()).is_err());
}
