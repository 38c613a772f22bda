use crate::blocks::block_max_distance;
use crate::error::{Error, Result};
use crate::objectives::TimeVaryingProblem;

use super::trace::EventTrace;

/// Per-tick agent errors `||u^i(k) - u_hat(t)||_{2,inf}` plus the error of
/// each agent at the end of every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    num_agents: usize,
    kappas: Vec<usize>,
    per_tick: Vec<f64>,
    boundary: Vec<Vec<f64>>,
}

impl ErrorSeries {
    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn total_ticks(&self) -> usize {
        self.per_tick.len() / self.num_agents
    }

    pub fn tick_error(&self, k: usize, agent: usize) -> f64 {
        self.per_tick[k * self.num_agents + agent]
    }

    pub fn tick_max(&self, k: usize) -> f64 {
        (0..self.num_agents).map(|i| self.tick_error(k, i)).fold(0.0, f64::max)
    }

    /// `[t][i]`: error of agent `i` at the end of epoch `t`.
    pub fn boundary(&self) -> &[Vec<f64>] {
        &self.boundary
    }

    /// `max_i ||u^i(eta_t) - u_hat(t)||_{2,inf}`.
    pub fn boundary_max(&self, t: usize) -> f64 {
        self.boundary[t].iter().copied().fold(0.0, f64::max)
    }

    pub fn kappas(&self) -> &[usize] {
        &self.kappas
    }
}

/// Check the trace was produced on `problem` and collect its errors.
pub fn error_series(trace: &EventTrace, problem: &TimeVaryingProblem) -> Result<ErrorSeries> {
    if &trace.partition != problem.partition() {
        return Err(Error::TraceMismatch("partition differs from the problem's".into()));
    }
    if trace.kappas != problem.kappas() {
        return Err(Error::TraceMismatch(format!(
            "trace epoch lengths {:?} differ from the problem's {:?}",
            trace.kappas,
            problem.kappas()
        )));
    }
    let n = trace.num_agents();
    if trace.errors.len() != trace.total_ticks() * n || trace.boundary_states.len() != trace.num_epochs() {
        return Err(Error::TraceMismatch("trace is truncated".into()));
    }
    let mut boundary = Vec::with_capacity(trace.num_epochs());
    for (t, states) in trace.boundary_states.iter().enumerate() {
        let target = problem.minimizer(t);
        let last = trace.epoch_last_tick(t);
        let mut row = Vec::with_capacity(n);
        for (i, u) in states.iter().enumerate() {
            let e = block_max_distance(u.as_slice(), target.as_slice(), &trace.partition);
            if e != trace.error(last, i) {
                return Err(Error::TraceMismatch(format!(
                    "recorded error of agent {i} at the end of epoch {t} is not measured against this problem's minimizer"
                )));
            }
            row.push(e);
        }
        boundary.push(row);
    }
    Ok(ErrorSeries {
        num_agents: n,
        kappas: trace.kappas.clone(),
        per_tick: trace.errors.clone(),
        boundary,
    })
}

/// `D_0 = max_i ||u^i(0) - u_hat(0)||_{2,inf}`.
pub fn initial_error(trace: &EventTrace, problem: &TimeVaryingProblem) -> f64 {
    let target = problem.minimizer(0);
    trace
        .initial
        .iter()
        .map(|s| block_max_distance(s.local.as_slice(), target.as_slice(), &trace.partition))
        .fold(0.0, f64::max)
}
