use std::collections::{HashMap, VecDeque};
use std::fmt;

use super::trace::{EventKind, EventTrace};

/// First way a trace can fail to describe a valid execution.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TickOrder { index: usize },
    UnknownAgent { index: usize, agent: usize },
    EarlyDelivery { index: usize, origin_tick: usize, tick: usize },
    /// A delivery with no matching send at the head of its link.
    UnmatchedDelivery { index: usize, src: usize, dst: usize },
    /// Sent or delivered value differs from what the source computed.
    PayloadMismatch { index: usize, src: usize, origin_tick: usize },
    /// Replayed local copy differs from the recorded final state.
    StateMismatch { agent: usize, block: usize },
    ProvenanceMismatch { agent: usize, block: usize },
    /// An agent did not compute in an epoch although the schedule forces it.
    MissingCompute { agent: usize, epoch: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TickOrder { index } => write!(f, "event {index} goes back in time"),
            Violation::UnknownAgent { index, agent } => write!(f, "event {index} names unknown agent {agent}"),
            Violation::EarlyDelivery {
                index,
                origin_tick,
                tick,
            } => write!(f, "event {index}: message from tick {origin_tick} delivered at tick {tick}"),
            Violation::UnmatchedDelivery { index, src, dst } => {
                write!(f, "event {index}: delivery on link {src}->{dst} out of FIFO order or never sent")
            }
            Violation::PayloadMismatch {
                index,
                src,
                origin_tick,
            } => write!(
                f,
                "event {index}: payload differs from agent {src}'s compute at tick {origin_tick}"
            ),
            Violation::StateMismatch { agent, block } => {
                write!(f, "agent {agent} final copy of block {block} does not match replay")
            }
            Violation::ProvenanceMismatch { agent, block } => {
                write!(f, "agent {agent} provenance of block {block} does not match replay")
            }
            Violation::MissingCompute { agent, epoch } => {
                write!(f, "agent {agent} never computed in epoch {epoch}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Replay a trace and check it is a valid execution: ticks never go back,
/// every link is FIFO with at least one tick of transit, every payload equals
/// the value its source computed, replaying the events reproduces the
/// recorded final states, and each agent computes in each epoch whenever the
/// schedule guarantees it.
pub fn audit_trace(trace: &EventTrace) -> AuditReport {
    let n = trace.num_agents();
    let mut report = AuditReport::default();
    let mut computes: HashMap<(usize, usize), &[f64]> = HashMap::new();
    let mut links: Vec<VecDeque<(usize, &[f64])>> = (0..n * n).map(|_| VecDeque::new()).collect();
    let mut locals: Vec<Vec<f64>> = trace.initial.iter().map(|s| s.local.as_slice().to_vec()).collect();
    let mut provenance: Vec<Vec<i64>> = trace.initial.iter().map(|s| s.provenance.clone()).collect();
    let mut computed_in_epoch = vec![vec![false; n]; trace.num_epochs()];
    let mut last_tick = 0;

    for (index, event) in trace.events.iter().enumerate() {
        if event.tick < last_tick {
            report.violations.push(Violation::TickOrder { index });
        }
        last_tick = last_tick.max(event.tick);
        let agents: &[usize] = match &event.kind {
            EventKind::Compute { agent, .. } => &[*agent],
            EventKind::Send { src, dst, .. } | EventKind::Deliver { src, dst, .. } => &[*src, *dst],
        };
        if let Some(&agent) = agents.iter().find(|&&a| a >= n) {
            report.violations.push(Violation::UnknownAgent { index, agent });
            continue;
        }
        match &event.kind {
            EventKind::Compute { agent, value } => {
                computes.insert((*agent, event.tick), value);
                let range = trace.partition.range(*agent);
                locals[*agent][range].copy_from_slice(value);
                provenance[*agent][*agent] = event.tick as i64;
                if let Some(row) = computed_in_epoch.get_mut(event.epoch) {
                    row[*agent] = true;
                }
            }
            EventKind::Send { src, dst, value, .. } => {
                if computes.get(&(*src, event.tick)) != Some(&value.as_slice()) {
                    report.violations.push(Violation::PayloadMismatch {
                        index,
                        src: *src,
                        origin_tick: event.tick,
                    });
                }
                links[src * n + dst].push_back((event.tick, value));
            }
            EventKind::Deliver {
                src,
                dst,
                origin_tick,
                value,
            } => {
                if event.tick <= *origin_tick {
                    report.violations.push(Violation::EarlyDelivery {
                        index,
                        origin_tick: *origin_tick,
                        tick: event.tick,
                    });
                }
                match links[src * n + dst].pop_front() {
                    Some((sent, _)) if sent == *origin_tick => {}
                    _ => report.violations.push(Violation::UnmatchedDelivery {
                        index,
                        src: *src,
                        dst: *dst,
                    }),
                }
                if computes.get(&(*src, *origin_tick)) != Some(&value.as_slice()) {
                    report.violations.push(Violation::PayloadMismatch {
                        index,
                        src: *src,
                        origin_tick: *origin_tick,
                    });
                }
                let range = trace.partition.range(*src);
                if range.len() == value.len() {
                    locals[*dst][range].copy_from_slice(value);
                }
                provenance[*dst][*src] = *origin_tick as i64;
            }
        }
    }

    for (agent, state) in trace.final_states.iter().enumerate().take(n) {
        for (block, range) in trace.partition.ranges().enumerate() {
            if state.local.as_slice()[range.clone()] != locals[agent][range] {
                report.violations.push(Violation::StateMismatch { agent, block });
            }
            if state.provenance[block] != provenance[agent][block] {
                report.violations.push(Violation::ProvenanceMismatch { agent, block });
            }
        }
    }

    if trace.compute_guaranteed {
        for (epoch, row) in computed_in_epoch.iter().enumerate() {
            for (agent, &seen) in row.iter().enumerate() {
                if !seen {
                    report.violations.push(Violation::MissingCompute { agent, epoch });
                }
            }
        }
    }
    report
}
