//! Simulation and cost analysis of allgather collective algorithms.
//!
//! The crate models a set of processes grouped into contiguous locality
//! regions and provides:
//!
//! * a deterministic, step-synchronous message-passing fabric that executes
//!   per-rank communication schedules and logs every transfer
//!   ([`fabric`]);
//! * schedule generators for four allgather algorithms — the log-step
//!   exchange, its locality-aware variant, the neighbor ring, and a
//!   single-leader hierarchical baseline ([`collectives`]);
//! * closed-form predictions of per-rank message counts and volumes that
//!   double as independent oracles for the simulated tallies ([`counts`]);
//! * latency/bandwidth cost models with eager/rendezvous protocol
//!   selection ([`costmodel`]);
//! * a command-line front end for runs, sweeps, and self-tests ([`cli`]).
//!
//! Every simulated result can be checked against
//! [`buffer::canonical_gather_oracle`], the direct concatenation of all
//! initial blocks.

pub mod buffer;
pub mod cli;
pub mod collectives;
pub mod costmodel;
pub mod counts;
pub mod error;
pub mod event;
pub mod fabric;
pub mod topology;

pub use buffer::{canonical_gather_oracle, Block, Buffer, Value};
pub use collectives::{run, AlgorithmId, RunOutput, Schedule};
pub use costmodel::{CostParams, ModelInput, ModelVariant};
pub use counts::CountPrediction;
pub use error::{Error, Result};
pub use event::MessageEvent;
pub use fabric::{aggregate, execute, RankCounts, StepPlan, Tally};
pub use topology::{Locality, Topology};
