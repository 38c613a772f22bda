//! Communication cycles: every agent computes at least once and that value
//! reaches every other agent.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::simulator::{EventKind, EventTrace};

/// Per-epoch cycle counts `c(t)` and the tick at which each cycle completed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CycleCount {
    pub counts: Vec<usize>,
    pub completions: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct CycleRow {
    t: usize,
    c_t: usize,
    completion_ticks: String,
}

impl CycleCount {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// All completion ticks in order.
    pub fn completion_ticks(&self) -> Vec<usize> {
        self.completions.iter().flatten().copied().collect()
    }

    /// CSV with columns `t,c_t,completion_ticks`, the ticks space separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (t, (&c, ticks)) in self.counts.iter().zip(&self.completions).enumerate() {
            let completion_ticks = ticks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            w.serialize(CycleRow {
                t,
                c_t: c,
                completion_ticks,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Count complete cycles in each epoch window.
///
/// A cycle started at tick `s` completes at the earliest tick `e` such that
/// every agent `i` has computed some value at a tick `o >= s` which every
/// other agent has received by `e`. The next cycle starts at `e + 1`, and a
/// cycle still open at the end of an epoch is dropped. Taking the earliest
/// completion each time yields the largest number of back-to-back cycles.
pub fn detect_cycles(trace: &EventTrace) -> CycleCount {
    let n = trace.num_agents();
    let mut out = CycleCount::default();
    let mut events = trace.events.iter().peekable();
    for t in 0..trace.num_epochs() {
        let end = trace.epoch_last_tick(t);
        let mut start = trace.epoch_start(t);
        let mut ticks = Vec::new();
        let mut received: HashMap<(usize, usize), Vec<bool>> = HashMap::new();
        let mut done = vec![false; n];
        let mut remaining = n;
        while let Some(e) = events.next_if(|e| e.tick <= end) {
            if e.tick < start {
                continue;
            }
            let finished = match e.kind {
                EventKind::Compute { agent, .. } if n == 1 => Some(agent),
                EventKind::Deliver {
                    src,
                    dst,
                    origin_tick,
                    ..
                } if origin_tick >= start && n > 1 && src != dst => {
                    let seen = received.entry((src, origin_tick)).or_insert_with(|| vec![false; n]);
                    seen[dst] = true;
                    (seen.iter().filter(|&&s| s).count() == n - 1).then_some(src)
                }
                _ => None,
            };
            if let Some(i) = finished {
                if !done[i] {
                    done[i] = true;
                    remaining -= 1;
                }
                if remaining == 0 {
                    ticks.push(e.tick);
                    start = e.tick + 1;
                    received.clear();
                    done.fill(false);
                    remaining = n;
                }
            }
        }
        out.counts.push(ticks.len());
        out.completions.push(ticks);
    }
    out
}
