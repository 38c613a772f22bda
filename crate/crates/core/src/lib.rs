//! Totally asynchronous block gradient tracking of time-varying convex
//! optima.
//!
//! Agents each own one block of the decision vector and apply projected
//! gradient steps on possibly stale local copies, while the objective
//! switches every `kappa_t` ticks. The crate simulates that law, counts the
//! communication cycles it completes, evaluates the resulting tracking-error
//! bounds and plans how a cycle budget should be spread over epochs.

pub mod blocks;
pub mod bounds;
pub mod config;
pub mod cycles;
pub mod error;
pub mod experiment;
pub mod objectives;
pub mod planner;
pub mod seeds;
pub mod simulator;

pub use blocks::{block_max_norm, block_slice, project_box, BoxSet, Partition, PartitionedVector};
pub use error::{AssumptionViolation, Error, Hypothesis, Result};
