use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability with which a computing agent broadcasts its new block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommunicationRegime {
    Fixed { p: f64 },
    /// `p_i(k) ~ Uniform(low, high)`, redrawn for every agent at every tick.
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleMode {
    /// Every agent computes and broadcasts at every tick.
    Synchronous,
    Bernoulli {
        p_compute: f64,
        communicate: CommunicationRegime,
    },
}

/// Extra ticks a message spends in transit beyond the minimum of one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayModel {
    Zero,
    Fixed { ticks: usize },
    Uniform { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub delay: DelayModel,
    pub seed: u64,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

impl Schedule {
    pub fn synchronous(delay: DelayModel, seed: u64) -> Self {
        Self {
            mode: ScheduleMode::Synchronous,
            delay,
            seed,
        }
    }

    pub fn bernoulli(p_compute: f64, communicate: CommunicationRegime, delay: DelayModel, seed: u64) -> Self {
        Self {
            mode: ScheduleMode::Bernoulli {
                p_compute,
                communicate,
            },
            delay,
            seed,
        }
    }

    /// Probabilities in `[0, 1]` (zero is allowed here for idle test runs)
    /// and ordered delay bounds.
    pub fn validate(&self) -> Result<()> {
        if let ScheduleMode::Bernoulli {
            p_compute,
            communicate,
        } = self.mode
        {
            check_probability("p_compute", p_compute)?;
            match communicate {
                CommunicationRegime::Fixed { p } => check_probability("communication probability", p)?,
                CommunicationRegime::Uniform { low, high } => {
                    check_probability("communication low", low)?;
                    check_probability("communication high", high)?;
                    if low > high {
                        return Err(Error::InvalidInput(format!(
                            "communication range is empty: {low} > {high}"
                        )));
                    }
                }
            }
        }
        if let DelayModel::Uniform { min, max } = self.delay {
            if min > max {
                return Err(Error::InvalidInput(format!("delay range is empty: {min} > {max}")));
            }
        }
        Ok(())
    }

    /// Whether every agent is certain to compute in every epoch window.
    pub fn guarantees_computation(&self) -> bool {
        match self.mode {
            ScheduleMode::Synchronous => true,
            ScheduleMode::Bernoulli { p_compute, .. } => p_compute >= 1.0,
        }
    }
}
