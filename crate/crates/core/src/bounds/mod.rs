//! Tracking-error bounds and the number of communication cycles needed to
//! keep the error below a target.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objectives::TimeVaryingProblem;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("contraction factor must lie in (0, 1), got {q}")));
    }
    Ok(())
}

fn check_nonnegative(what: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// Everything the bounds depend on: `q_0..q_T`, `sigma_0..sigma_{T-1}`,
/// the initial error `D_0` and cycle counts `c(0)..c(T)`.
///
/// Cycle counts are real so the planner's relaxed allocations can be
/// evaluated too.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    q: Vec<f64>,
    sigma: Vec<f64>,
    d0: f64,
    cycles: Vec<f64>,
}

impl BoundInputs {
    pub fn new(q: Vec<f64>, sigma: Vec<f64>, d0: f64, cycles: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidInput("need at least one contraction factor".into()));
        }
        for &x in &q {
            check_q(x)?;
        }
        if sigma.len() != q.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: q.len() - 1,
                found: sigma.len(),
            });
        }
        if cycles.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: cycles.len(),
            });
        }
        for &s in &sigma {
            check_nonnegative("minimizer drift", s)?;
        }
        check_nonnegative("initial error", d0)?;
        for &c in &cycles {
            check_nonnegative("cycle count", c)?;
        }
        Ok(Self { q, sigma, d0, cycles })
    }

    /// Inputs taken from a verified problem.
    pub fn from_problem(problem: &TimeVaryingProblem, d0: f64, cycles: Vec<f64>) -> Result<Self> {
        Self::new(problem.q_values(), problem.sigmas(), d0, cycles)
    }

    pub fn with_cycles(&self, cycles: Vec<f64>) -> Result<Self> {
        Self::new(self.q.clone(), self.sigma.clone(), self.d0, cycles)
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

    pub fn cycles(&self) -> &[f64] {
        &self.cycles
    }

    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q_max(&self) -> f64 {
        self.q.iter().copied().fold(0.0, f64::max)
    }

    /// `B = max(max_t sigma_t, D_0)`.
    pub fn b(&self) -> f64 {
        self.sigma.iter().copied().fold(self.d0, f64::max)
    }

    /// `D_0..D_T` with `D_t = q_{t-1}^{c(t-1)} D_{t-1} + sigma_{t-1}`.
    pub fn d_sequence(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.q.len());
        d.push(self.d0);
        for t in 1..self.q.len() {
            d.push(self.q[t - 1].powf(self.cycles[t - 1]) * d[t - 1] + self.sigma[t - 1]);
        }
        d
    }

    fn factor(&self, t: usize) -> f64 {
        self.q[t].powf(self.cycles[t])
    }
}

/// Bound on `||u^i(eta_t) - u_hat(t)||_{2,inf}`:
/// `D_0 prod_{0..=t} q^c + sum_{p=1..=t} sigma_{p-1} prod_{p..=t} q^c`.
pub fn finite_time_bound(inputs: &BoundInputs, t: usize) -> Result<f64> {
    if t > inputs.horizon() {
        return Err(Error::OutOfRange {
            what: "epoch",
            index: t,
            limit: inputs.horizon(),
        });
    }
    let mut product = 1.0;
    let mut sum = 0.0;
    for r in (0..=t).rev() {
        product *= inputs.factor(r);
        let weight = if r == 0 { inputs.d0 } else { inputs.sigma[r - 1] };
        sum += weight * product;
    }
    Ok(sum)
}

/// `finite_time_bound` for every epoch.
pub fn finite_time_bounds(inputs: &BoundInputs) -> Vec<f64> {
    (0..=inputs.horizon())
        .map(|t| finite_time_bound(inputs, t).expect("epoch within horizon"))
        .collect()
}

/// `B q_max / (1 - q_max)`, valid for every epoch once each gets a cycle.
pub fn asymptotic_bound(b: f64, q_max: f64) -> Result<f64> {
    check_q(q_max)?;
    check_nonnegative("B", b)?;
    Ok(b * q_max / (1.0 - q_max))
}

fn check_target(rho: f64, b: f64, q_max: f64) -> Result<()> {
    check_q(q_max)?;
    check_nonnegative("B", b)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("error target must be positive, got {rho}")));
    }
    Ok(())
}

/// Smallest `c >= 1` with `(rho/B) / (1 + rho/B) >= q_max^c`, which keeps
/// every epoch within `rho` as the horizon grows.
pub fn required_cycles_asymptotic(rho: f64, b: f64, q_max: f64) -> Result<u64> {
    check_target(rho, b, q_max)?;
    if b == 0.0 || rho.is_infinite() {
        return Ok(1);
    }
    let x = rho / b;
    let c = ((x / (1.0 + x)).ln() / q_max.ln()).ceil();
    if !c.is_finite() || c >= u64::MAX as f64 {
        return Err(Error::InvalidInput(format!(
            "cycle requirement overflows for q_max = {q_max}, rho/B = {x}"
        )));
    }
    Ok((c as u64).max(1))
}

/// Smallest `c >= 1` with `q^c (1 + x) <= x + q^{(T+2)c}`, `x = rho/B`, so
/// that `c` cycles in every epoch keep the bound within `rho` up to
/// epoch `horizon`.
///
/// The asymptotic requirement always satisfies the inequality; the result
/// is found by searching downward from it. The set of valid `c >= 1` is an
/// interval `[c*, inf)`, so bisection finds its left end.
pub fn required_cycles_finite(rho: f64, b: f64, q_max: f64, horizon: usize) -> Result<u64> {
    let mut hi = required_cycles_asymptotic(rho, b, q_max)?;
    if b == 0.0 || rho.is_infinite() {
        return Ok(1);
    }
    let x = rho / b;
    let holds = |c: u64| {
        let c = c as f64;
        q_max.powf(c) * (1.0 + x) <= x + q_max.powf((horizon as f64 + 2.0) * c)
    };
    while !holds(hi) {
        hi += 1;
    }
    if holds(1) {
        return Ok(1);
    }
    let mut lo = 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One row of the measured-error versus bound comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub t: usize,
    pub measured_max_error: f64,
    pub theorem2_bound: f64,
}

/// Pair each measured end-of-epoch error with its bound.
pub fn compare_with_bound(measured: &[f64], inputs: &BoundInputs) -> Result<Vec<BoundRow>> {
    if measured.len() != inputs.horizon() + 1 {
        return Err(Error::DimensionMismatch {
            expected: inputs.horizon() + 1,
            found: measured.len(),
        });
    }
    Ok(measured
        .iter()
        .zip(finite_time_bounds(inputs))
        .enumerate()
        .map(|(t, (&m, b))| BoundRow {
            t,
            measured_max_error: m,
            theorem2_bound: b,
        })
        .collect())
}

/// CSV with columns `t,measured_max_error,theorem2_bound`.
pub fn write_bounds_csv<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
