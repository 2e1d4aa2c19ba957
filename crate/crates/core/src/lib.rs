// SPDX-License-Identifier: MIT

//! Discrete-event simulator comparing four execution models for stateful
//! serverless functions in edge networks.
//!
//! The models differ in where a function chain's state resides: at the
//! client, on a remote state store, on the executor running the chain, or
//! travelling along the chain. Each invocation is compiled into a [`Plan`]
//! of transfers and computations, which the [`engine`] executes over a
//! [`Topology`] of FIFO nodes and links.

// validation uses `!(x > 0.0)` and the like so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Version recorded in manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod config;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scheduler;
pub mod topology;
pub mod workload;

pub use config::{load_config, parse_config, ConfigDocument, ConfigError, ExperimentConfig};
pub use engine::{drain_check, run, EngineError, InvocationRecord, RunOptions, RunResult};
pub use experiment::{run_experiment, ExperimentError, ExperimentOutcome};
pub use metrics::{aggregate, summarize_replications, Aggregate, ReplicationSummary};
pub use models::{ExecutionModel, Plan, StateDirectory, Step};
pub use scheduler::{Policy, PolicyKind};
pub use topology::{NodeId, Path, Role, Topology, TopologySpec};
pub use workload::{ChainSpec, FunctionSpec, Invocation};
