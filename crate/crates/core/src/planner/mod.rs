//! Allocation of a total cycle budget `K` across epochs to minimize
//! `J(c) = sum_t q_t^{c(t)} D_t`.
//!
//! `J` is a sum of exponentials of affine functions of `c`, hence convex.
//! Its partial derivative in `c(s)` is `ln(q_s) q_s^{c(s)} H_s` where
//! `H_s = D_s S_s`, `S_s = sum_{theta >= s} prod_{s < r <= theta} q_r^{c(r)}`,
//! and `H_s` does not depend on `c(s)`. For a fixed multiplier `mu` the
//! Lagrangian is minimized by exact coordinate steps, and `mu` is found by
//! bisection on the budget.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundInputs;
use crate::error::{Error, Result};

pub const STATIONARITY_TOLERANCE: f64 = 1e-10;
pub const BUDGET_TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 10_000;
const MAX_BISECTIONS: usize = 400;
/// Largest number of allocations `brute_force_plan` will enumerate.
pub const ENUMERATION_CAP: u128 = 11_000_000;

/// How the drift part of `H_s` is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTerm {
    /// `sigma` contributions decay by `q_r^{c(r)}`, so the equations are
    /// the exact optimality conditions of `J`.
    #[default]
    WithCycles,
    /// `sigma` contributions decay by bare `q_r`; the equations are then the
    /// optimality conditions of a convex surrogate of `J`.
    WithoutCycles,
}

/// Contraction factors `q_0..q_T`, drifts `sigma_0..sigma_{T-1}` and `D_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    q: Vec<f64>,
    sigma: Vec<f64>,
    d0: f64,
}

impl PlanningProblem {
    pub fn new(q: Vec<f64>, sigma: Vec<f64>, d0: f64) -> Result<Self> {
        let cycles = vec![0.0; q.len()];
        let checked = BoundInputs::new(q, sigma, d0, cycles)?;
        Ok(Self::from_bounds(&checked))
    }

    pub fn from_bounds(inputs: &BoundInputs) -> Self {
        Self {
            q: inputs.q().to_vec(),
            sigma: inputs.sigma().to_vec(),
            d0: inputs.d0(),
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }

    pub fn objective(&self, c: &[f64]) -> f64 {
        objective_value(c, &self.q, &self.sigma, self.d0)
    }

    /// `H_0..H_T` at `c` under the chosen drift weighting.
    pub fn coupling(&self, c: &[f64], term: DriftTerm) -> Vec<f64> {
        let n = self.q.len();
        let p: Vec<f64> = self.q.iter().zip(c).map(|(q, c)| q.powf(*c)).collect();
        let suffix = |w: &dyn Fn(usize) -> f64| {
            let mut s = vec![1.0; n];
            for t in (0..n - 1).rev() {
                s[t] = 1.0 + w(t + 1) * s[t + 1];
            }
            s
        };
        let s_cycles = suffix(&|r| p[r]);
        match term {
            DriftTerm::WithCycles => {
                let mut d = self.d0;
                (0..n)
                    .map(|s| {
                        if s > 0 {
                            d = p[s - 1] * d + self.sigma[s - 1];
                        }
                        d * s_cycles[s]
                    })
                    .collect()
            }
            DriftTerm::WithoutCycles => {
                let s_bare = suffix(&|r| self.q[r]);
                let mut lead = self.d0;
                let mut drift = 0.0;
                (0..n)
                    .map(|s| {
                        if s > 0 {
                            lead *= p[s - 1];
                            drift = self.q[s - 1] * drift + self.sigma[s - 1];
                        }
                        lead * s_cycles[s] + drift * s_bare[s]
                    })
                    .collect()
            }
        }
    }

    /// Per-epoch violation of the optimality conditions at `(c, mu)`:
    /// `|ln(q) q^c H + mu|` where `c > c_min`, and the amount by which the
    /// lower bound is not binding otherwise.
    pub fn stationarity_residuals(&self, c: &[f64], mu: f64, c_min: f64, term: DriftTerm) -> Vec<f64> {
        let h = self.coupling(c, term);
        (0..self.q.len())
            .map(|s| {
                let g = self.q[s].ln() * self.q[s].powf(c[s]) * h[s] + mu;
                if c[s] > c_min {
                    g.abs()
                } else {
                    (-g).max(0.0)
                }
            })
            .collect()
    }
}

/// `sum_t q_t^{c(t)} D_t` with `D_t = q_{t-1}^{c(t-1)} D_{t-1} + sigma_{t-1}`.
pub fn objective_value(c: &[f64], q: &[f64], sigma: &[f64], d0: f64) -> f64 {
    assert_eq!(c.len(), q.len(), "one cycle count per epoch");
    assert_eq!(sigma.len() + 1, q.len(), "one drift per switch");
    let mut d = d0;
    let mut total = 0.0;
    for t in 0..q.len() {
        let contracted = q[t].powf(c[t]) * d;
        total += contracted;
        if t < sigma.len() {
            d = contracted + sigma[t];
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Lower bound on every `c(t)`.
    pub c_min: f64,
    pub drift_term: DriftTerm,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            c_min: 0.0,
            drift_term: DriftTerm::WithCycles,
        }
    }
}

/// Real-valued optimum, its multiplier and a rounded integer plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclePlan {
    pub c_real: Vec<f64>,
    pub c_int: Vec<u64>,
    pub mu: f64,
    /// `J` at `c_real`.
    pub objective_value: f64,
    /// `J` at `c_int`.
    pub integer_objective: f64,
    pub max_residual: f64,
    pub budget_gap: f64,
    pub drift_term: DriftTerm,
}

#[derive(Serialize)]
struct PlanRow {
    t: usize,
    c_real: f64,
    c_int: u64,
}

impl CyclePlan {
    /// CSV with columns `t,c_real,c_int`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (t, (&c_real, &c_int)) in self.c_real.iter().zip(&self.c_int).enumerate() {
            w.serialize(PlanRow { t, c_real, c_int })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimize `J + mu sum c` over `c >= c_min` by exact coordinate steps,
/// starting from `c`. Returns the number of sweeps.
fn inner_solve(problem: &PlanningProblem, mu: f64, opts: &SolverOptions, c: &mut [f64]) -> Result<usize> {
    let n = problem.q.len();
    for sweep in 1..=MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for s in 0..n {
            let h = problem.coupling(c, opts.drift_term)[s];
            let q = problem.q[s];
            let next = if h > 0.0 {
                ((mu / (-q.ln() * h)).ln() / q.ln()).max(opts.c_min)
            } else {
                opts.c_min
            };
            change = change.max((next - c[s]).abs() / c[s].abs().max(1.0));
            c[s] = next;
        }
        if change < STATIONARITY_TOLERANCE {
            return Ok(sweep);
        }
    }
    let residual = problem
        .stationarity_residuals(c, mu, opts.c_min, opts.drift_term)
        .into_iter()
        .fold(0.0, f64::max);
    Err(Error::Solver {
        message: format!("coordinate sweeps did not settle within {MAX_SWEEPS} sweeps at mu = {mu:e}"),
        residual,
    })
}

fn finish(
    problem: &PlanningProblem,
    c: Vec<f64>,
    mu: f64,
    budget: f64,
    opts: &SolverOptions,
) -> Result<CyclePlan> {
    let residuals = problem.stationarity_residuals(&c, mu, opts.c_min, opts.drift_term);
    let c_int = round_plan(&c, budget.floor() as u64, problem)?;
    let c_int_real: Vec<f64> = c_int.iter().map(|&x| x as f64).collect();
    Ok(CyclePlan {
        objective_value: problem.objective(&c),
        integer_objective: problem.objective(&c_int_real),
        max_residual: residuals.into_iter().fold(0.0, f64::max),
        budget_gap: (c.iter().sum::<f64>() - budget).abs(),
        c_real: c,
        c_int,
        mu,
        drift_term: opts.drift_term,
    })
}

/// Solve the optimality system for budget `K`: outer bisection on the
/// multiplier `mu` (in log scale) until `sum c = K`, inner coordinate
/// sweeps until `c` is stable.
pub fn solve_kkt(problem: &PlanningProblem, budget: f64, opts: &SolverOptions) -> Result<CyclePlan> {
    let n = problem.q.len();
    if !(opts.c_min >= 0.0 && opts.c_min.is_finite()) {
        return Err(Error::InvalidInput(format!("c_min must be nonnegative, got {}", opts.c_min)));
    }
    let floor = opts.c_min * n as f64;
    if !(budget.is_finite() && budget >= floor) {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} is below {n} epochs times c_min = {}",
            opts.c_min
        )));
    }
    let lowest = vec![opts.c_min; n];
    let h = problem.coupling(&lowest, opts.drift_term);
    let mu_hi = (0..n)
        .map(|s| -problem.q[s].ln() * problem.q[s].powf(opts.c_min) * h[s])
        .fold(0.0, f64::max);
    if mu_hi == 0.0 {
        // J is identically zero: every feasible plan is optimal
        let spread = (budget - floor) / n as f64;
        return finish(problem, vec![opts.c_min + spread; n], 0.0, budget, opts);
    }
    if budget - floor <= BUDGET_TOLERANCE {
        return finish(problem, lowest, mu_hi, budget, opts);
    }

    let total = |c: &[f64]| c.iter().sum::<f64>();
    let mut c = lowest.clone();
    let mut lo = mu_hi;
    let mut c_lo = c.clone();
    let mut sum_lo = floor;
    let mut hi = mu_hi;
    let mut sum_hi = floor;
    while sum_lo < budget {
        hi = lo;
        sum_hi = sum_lo;
        lo /= 16.0;
        if lo < 1e-290 {
            return Err(Error::InfeasibleBudget(format!(
                "no multiplier spends a budget of {budget}"
            )));
        }
        inner_solve(problem, lo, opts, &mut c)?;
        c_lo = c.clone();
        sum_lo = total(&c);
        if sum_lo < sum_hi - BUDGET_TOLERANCE {
            return Err(Error::Solver {
                message: "spent budget increased with the multiplier".into(),
                residual: sum_hi - sum_lo,
            });
        }
    }
    if (sum_lo - budget).abs() <= BUDGET_TOLERANCE {
        return finish(problem, c_lo, lo, budget, opts);
    }

    let mut c = c_lo;
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        inner_solve(problem, mid, opts, &mut c)?;
        let sum = total(&c);
        if sum > sum_lo + BUDGET_TOLERANCE || sum < sum_hi - BUDGET_TOLERANCE {
            return Err(Error::Solver {
                message: "spent budget is not monotone in the multiplier".into(),
                residual: (sum - sum_lo).max(sum_hi - sum),
            });
        }
        if (sum - budget).abs() <= BUDGET_TOLERANCE {
            return finish(problem, c, mid, budget, opts);
        }
        if sum > budget {
            lo = mid;
            sum_lo = sum;
        } else {
            hi = mid;
            sum_hi = sum;
        }
    }
    Err(Error::Solver {
        message: format!("multiplier bisection stalled between {lo:e} and {hi:e}"),
        residual: (sum_lo - budget).min(budget - sum_hi),
    })
}

/// Floor each entry, then hand out the remaining units one at a time to the
/// epoch whose extra cycle lowers `J` the most.
pub fn round_plan(c_real: &[f64], budget: u64, problem: &PlanningProblem) -> Result<Vec<u64>> {
    if c_real.len() != problem.q.len() {
        return Err(Error::DimensionMismatch {
            expected: problem.q.len(),
            found: c_real.len(),
        });
    }
    if c_real.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::InvalidInput(format!("cannot round {c_real:?}")));
    }
    let mut plan: Vec<u64> = c_real.iter().map(|c| (c + 1e-9).floor() as u64).collect();
    if plan.iter().sum::<u64>() > budget {
        plan = c_real.iter().map(|c| c.floor() as u64).collect();
    }
    if plan.iter().sum::<u64>() > budget {
        return Err(Error::InvalidInput(format!(
            "cannot round {c_real:?} into a budget of {budget}"
        )));
    }
    let as_real = |p: &[u64]| p.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let mut left = budget.saturating_sub(plan.iter().sum());
    while left > 0 {
        let mut trial = as_real(&plan);
        let mut best = (0, f64::INFINITY);
        for t in 0..plan.len() {
            trial[t] += 1.0;
            let value = problem.objective(&trial);
            trial[t] -= 1.0;
            if value < best.1 {
                best = (t, value);
            }
        }
        plan[best.0] += 1;
        left -= 1;
    }
    Ok(plan)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) / (i + 1);
    }
    out
}

/// Integer allocation minimizing `J` among all with `sum c <= K` and
/// `c(t) >= c_min`, by exhaustive enumeration.
pub fn brute_force_plan(problem: &PlanningProblem, budget: u64, c_min: u64) -> Result<(Vec<u64>, f64)> {
    let n = problem.q.len();
    let floor = c_min * n as u64;
    if budget < floor {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} is below {n} epochs times c_min = {c_min}"
        )));
    }
    let spare = (budget - floor) as u128;
    let count = binomial(spare + n as u128, n as u128);
    if count > ENUMERATION_CAP {
        return Err(Error::SizeCap(format!(
            "{count} allocations exceed the cap of {ENUMERATION_CAP}"
        )));
    }
    let mut best = (vec![c_min; n], f64::INFINITY);
    let mut current = vec![0u64; n];
    enumerate(problem, c_min, budget - floor, 0, problem.d0, 0.0, &mut current, &mut best);
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    problem: &PlanningProblem,
    c_min: u64,
    spare: u64,
    t: usize,
    d: f64,
    partial: f64,
    current: &mut Vec<u64>,
    best: &mut (Vec<u64>, f64),
) {
    let n = problem.q.len();
    for extra in 0..=spare {
        let c = c_min + extra;
        current[t] = c;
        let contracted = problem.q[t].powf(c as f64) * d;
        let value = partial + contracted;
        if t + 1 == n {
            if value < best.1 {
                *best = (current.clone(), value);
            }
        } else {
            let next = contracted + problem.sigma[t];
            enumerate(problem, c_min, spare - extra, t + 1, next, value, current, best);
        }
    }
}
