use std::io::Write;

use serde::Serialize;

use crate::blocks::{Partition, PartitionedVector};
use crate::error::Result;

/// Agent `i`'s local copy `u^i(k)` and, per block `j`, the tick at which
/// agent `j` computed the value held (`-1` for the initial value).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub local: PartitionedVector,
    pub provenance: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Agent computed `u_i^i(k + 1) = value`.
    Compute { agent: usize, value: Vec<f64> },
    Send {
        src: usize,
        dst: usize,
        deliver_at: usize,
        value: Vec<f64>,
    },
    Deliver {
        src: usize,
        dst: usize,
        origin_tick: usize,
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tick: usize,
    pub epoch: usize,
    pub kind: EventKind,
}

/// Everything one run produced.
///
/// Within a tick, events are ordered deliveries, then computes, then sends.
/// `errors` holds, tick-major, `||u^i(k+1) - u_hat(t)||_{2,inf}` for the
/// state after tick `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub partition: Partition,
    pub kappas: Vec<usize>,
    pub events: Vec<Event>,
    pub errors: Vec<f64>,
    pub initial: Vec<AgentState>,
    pub final_states: Vec<AgentState>,
    /// Local copies after the last tick of each epoch, `[t][i]`.
    pub boundary_states: Vec<Vec<PartitionedVector>>,
    pub compute_guaranteed: bool,
}

#[derive(Serialize)]
struct ErrorRow {
    k: usize,
    t: usize,
    agent: usize,
    error_2inf: f64,
}

#[derive(Serialize)]
struct EventRow {
    k: usize,
    kind: &'static str,
    src: usize,
    dst: Option<usize>,
    origin_tick: usize,
}

impl EventTrace {
    pub fn num_agents(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn total_ticks(&self) -> usize {
        self.kappas.iter().sum()
    }

    pub fn num_epochs(&self) -> usize {
        self.kappas.len()
    }

    /// First tick of epoch `t`.
    pub fn epoch_start(&self, t: usize) -> usize {
        self.kappas[..t].iter().sum()
    }

    /// Last tick of epoch `t`.
    pub fn epoch_last_tick(&self, t: usize) -> usize {
        self.epoch_start(t) + self.kappas[t] - 1
    }

    pub fn epoch_of_tick(&self, k: usize) -> usize {
        let mut end = 0;
        for (t, kappa) in self.kappas.iter().enumerate() {
            end += kappa;
            if k < end {
                return t;
            }
        }
        self.kappas.len() - 1
    }

    pub fn error(&self, k: usize, agent: usize) -> f64 {
        self.errors[k * self.num_agents() + agent]
    }

    pub fn max_error(&self, k: usize) -> f64 {
        let n = self.num_agents();
        self.errors[k * n..(k + 1) * n].iter().copied().fold(0.0, f64::max)
    }

    /// CSV with columns `k,t,agent,error_2inf`.
    pub fn write_errors_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.num_agents();
        for k in 0..self.total_ticks() {
            let t = self.epoch_of_tick(k);
            for agent in 0..n {
                w.serialize(ErrorRow {
                    k,
                    t,
                    agent,
                    error_2inf: self.error(k, agent),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns `k,kind,src,dst,origin_tick`.
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            let row = match &e.kind {
                EventKind::Compute { agent, .. } => EventRow {
                    k: e.tick,
                    kind: "compute",
                    src: *agent,
                    dst: None,
                    origin_tick: e.tick,
                },
                EventKind::Send { src, dst, .. } => EventRow {
                    k: e.tick,
                    kind: "send",
                    src: *src,
                    dst: Some(*dst),
                    origin_tick: e.tick,
                },
                EventKind::Deliver {
                    src,
                    dst,
                    origin_tick,
                    ..
                } => EventRow {
                    k: e.tick,
                    kind: "deliver",
                    src: *src,
                    dst: Some(*dst),
                    origin_tick: *origin_tick,
                },
            };
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
