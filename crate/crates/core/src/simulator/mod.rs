//! Discrete-event simulation of asynchronous block-coordinate projected
//! gradient descent over a sequence of objectives.

mod audit;
mod schedule;
mod series;
mod trace;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{block_max_distance, PartitionedVector};
use crate::error::{Error, Result};
use crate::objectives::TimeVaryingProblem;

pub use audit::{audit_trace, AuditReport, Violation};
pub use schedule::{CommunicationRegime, DelayModel, Schedule, ScheduleMode};
pub use series::{error_series, initial_error, ErrorSeries};
pub use trace::{AgentState, Event, EventKind, EventTrace};

struct Message {
    deliver_at: usize,
    origin_tick: usize,
    value: Vec<f64>,
}

/// Same starting point for every agent.
pub fn shared_initial(problem: &TimeVaryingProblem, u0: &PartitionedVector) -> Vec<PartitionedVector> {
    vec![u0.clone(); problem.num_agents()]
}

/// Run the update law over all epochs of `problem`.
///
/// Each tick: messages due are delivered first, then computing agents take a
/// projected gradient step on their own block using their (post-delivery)
/// local copy, then each computing agent decides whether to broadcast the new
/// block. A message sent at tick `k` with extra delay `d` arrives at
/// `k + 1 + d`, held back if needed so that each link stays FIFO.
///
/// `initial` holds one starting vector per agent; each is projected onto the
/// constraint set first.
pub fn run(problem: &TimeVaryingProblem, schedule: &Schedule, initial: &[PartitionedVector]) -> Result<EventTrace> {
    schedule.validate()?;
    let partition = problem.partition().clone();
    let n = partition.num_blocks();
    if initial.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: initial.len(),
        });
    }
    let set = problem.constraint();
    let mut states = Vec::with_capacity(n);
    for (id, u) in initial.iter().enumerate() {
        if u.partition() != &partition {
            return Err(Error::PartitionMismatch);
        }
        states.push(AgentState {
            id,
            local: set.project(u)?,
            provenance: vec![-1; n],
        });
    }
    let initial_states = states.clone();

    let kappas = problem.kappas();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut queues: Vec<VecDeque<Message>> = (0..n * n).map(|_| VecDeque::new()).collect();
    let mut last_delivery = vec![0usize; n * n];
    let mut events = Vec::new();
    let mut errors = Vec::with_capacity(problem.total_ticks() * n);
    let mut boundary_states = Vec::with_capacity(kappas.len());
    let mut grad = Vec::new();
    let mut computed = vec![false; n];
    let mut broadcast = vec![false; n];

    let mut k = 0;
    for (t, &kappa) in kappas.iter().enumerate() {
        let epoch = &problem.epochs()[t];
        let gamma = problem.constants()[t].gamma;
        let target = problem.minimizer(t);
        let mut sampler = epoch.gradient_sampler();
        for _ in 0..kappa {
            for dst in 0..n {
                for src in 0..n {
                    let queue = &mut queues[src * n + dst];
                    while queue.front().is_some_and(|m| m.deliver_at <= k) {
                        let m = queue.pop_front().expect("front checked");
                        let state = &mut states[dst];
                        state.local.block_mut(src)?.copy_from_slice(&m.value);
                        state.provenance[src] = m.origin_tick as i64;
                        events.push(Event {
                            tick: k,
                            epoch: t,
                            kind: EventKind::Deliver {
                                src,
                                dst,
                                origin_tick: m.origin_tick,
                                value: m.value,
                            },
                        });
                    }
                }
            }

            for i in 0..n {
                let (compute, send) = match schedule.mode {
                    ScheduleMode::Synchronous => (true, true),
                    ScheduleMode::Bernoulli {
                        p_compute,
                        communicate,
                    } => {
                        let compute = rng.random::<f64>() < p_compute;
                        let p_comm = match communicate {
                            CommunicationRegime::Fixed { p } => p,
                            CommunicationRegime::Uniform { low, high } => {
                                if low < high {
                                    rng.random_range(low..high)
                                } else {
                                    low
                                }
                            }
                        };
                        let send = compute && rng.random::<f64>() < p_comm;
                        (compute, send)
                    }
                };
                computed[i] = compute;
                broadcast[i] = send;
            }

            for i in 0..n {
                if !computed[i] {
                    continue;
                }
                let range = partition.range(i);
                grad.resize(range.len(), 0.0);
                let state = &mut states[i];
                sampler.block_gradient(state.local.as_slice(), i, &mut grad);
                let block = state.local.block_mut(i)?;
                for (x, g) in block.iter_mut().zip(&grad) {
                    *x -= gamma * g;
                }
                set.project_block_in_place(i, block);
                state.provenance[i] = k as i64;
                events.push(Event {
                    tick: k,
                    epoch: t,
                    kind: EventKind::Compute {
                        agent: i,
                        value: block.to_vec(),
                    },
                });
            }

            for src in 0..n {
                if !broadcast[src] {
                    continue;
                }
                let value = states[src].local.block(src)?.to_vec();
                for dst in (0..n).filter(|&d| d != src) {
                    let extra = match schedule.delay {
                        DelayModel::Zero => 0,
                        DelayModel::Fixed { ticks } => ticks,
                        DelayModel::Uniform { min, max } => rng.random_range(min..=max),
                    };
                    let link = src * n + dst;
                    let deliver_at = (k + 1 + extra).max(last_delivery[link]);
                    last_delivery[link] = deliver_at;
                    queues[link].push_back(Message {
                        deliver_at,
                        origin_tick: k,
                        value: value.clone(),
                    });
                    events.push(Event {
                        tick: k,
                        epoch: t,
                        kind: EventKind::Send {
                            src,
                            dst,
                            deliver_at,
                            value: value.clone(),
                        },
                    });
                }
            }

            for state in &states {
                assert!(
                    set.contains(state.local.as_slice()),
                    "agent {} left the constraint set at tick {k}",
                    state.id
                );
                errors.push(block_max_distance(
                    state.local.as_slice(),
                    target.as_slice(),
                    &partition,
                ));
            }
            k += 1;
        }
        boundary_states.push(states.iter().map(|s| s.local.clone()).collect());
    }

    Ok(EventTrace {
        partition,
        kappas,
        events,
        errors,
        initial: initial_states,
        final_states: states,
        boundary_states,
        compute_guaranteed: schedule.guarantees_computation(),
    })
}
