// SPDX-License-Identifier: MIT

//! Function chains and the invocation streams they generate.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{exponential, substream};
use crate::topology::{NodeId, Role, Topology};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandDistribution {
    /// Every invocation needs exactly `demand` operations.
    #[default]
    Fixed,
    /// Exponentially distributed with mean `demand`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub id: String,
    /// Compute demand, in operations.
    pub demand: f64,
    #[serde(default, skip_serializing_if = "is_fixed")]
    pub demand_distribution: DemandDistribution,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

fn is_fixed(d: &DemandDistribution) -> bool {
    *d == DemandDistribution::Fixed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    Poisson,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcess {
    pub kind: ArrivalKind,
    /// Invocations per second.
    pub rate: f64,
    pub start: f64,
    pub stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub id: String,
    pub client: NodeId,
    pub state_bytes: u64,
    pub functions: Vec<FunctionSpec>,
    pub arrival: ArrivalProcess,
}

impl ChainSpec {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("chain {0}: no functions")]
    EmptyChain(String),
    #[error("duplicate chain id {0}")]
    DuplicateChainId(String),
    #[error("chain {chain}: function {function} has non-positive demand")]
    NonPositiveDemand { chain: String, function: String },
    #[error("chain {0}: arrival rate must be positive and finite")]
    NonPositiveRate(String),
    #[error("chain {0}: arrival window requires start < stop")]
    EmptyWindow(String),
    #[error("chain {chain}: client {node} is not a node with role client")]
    NotAClient { chain: String, node: NodeId },
}

/// One arrival of a chain in the merged stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub id: u64,
    /// Index of the chain in the list given to [`generate_invocations`].
    pub chain: usize,
    /// Per-chain sequence number, from 0.
    pub seq: u64,
    pub arrival_time: f64,
    /// Sampled demand of each function, in operations.
    pub demands: Vec<f64>,
}

/// Checks the chain invariants, including that each client is a client node.
pub fn validate_chains(chains: &[ChainSpec], topology: &Topology) -> Result<(), WorkloadError> {
    let mut ids = BTreeSet::new();
    for chain in chains {
        if !ids.insert(chain.id.as_str()) {
            return Err(WorkloadError::DuplicateChainId(chain.id.clone()));
        }
        if chain.functions.is_empty() {
            return Err(WorkloadError::EmptyChain(chain.id.clone()));
        }
        if let Some(f) = chain
            .functions
            .iter()
            .find(|f| !(f.demand > 0.0 && f.demand.is_finite()))
        {
            return Err(WorkloadError::NonPositiveDemand {
                chain: chain.id.clone(),
                function: f.id.clone(),
            });
        }
        let arrival = &chain.arrival;
        if !(arrival.rate > 0.0 && arrival.rate.is_finite()) {
            return Err(WorkloadError::NonPositiveRate(chain.id.clone()));
        }
        if !(arrival.start < arrival.stop) || !arrival.stop.is_finite() {
            return Err(WorkloadError::EmptyWindow(chain.id.clone()));
        }
        let is_client = topology
            .node(chain.client)
            .map(|n| n.has_role(Role::Client))
            .unwrap_or(false);
        if !is_client {
            return Err(WorkloadError::NotAClient {
                chain: chain.id.clone(),
                node: chain.client,
            });
        }
    }
    Ok(())
}

/// Time to the next arrival of `process`.
pub fn next_interarrival<R: Rng + ?Sized>(process: &ArrivalProcess, rng: &mut R) -> f64 {
    match process.kind {
        ArrivalKind::Deterministic => 1.0 / process.rate,
        ArrivalKind::Poisson => exponential(rng, process.rate),
    }
}

/// Arrival times of one chain: the first at `start + interarrival`, then
/// every further interarrival while strictly before `stop`.
pub fn arrival_times(chain: &ChainSpec, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, &[b"arrival", chain.id.as_bytes()]);
    let process = &chain.arrival;
    let mut times = Vec::new();
    let mut t = process.start + next_interarrival(process, &mut rng);
    while t < process.stop {
        times.push(t);
        t += next_interarrival(process, &mut rng);
    }
    times
}

/// Merged, reproducible invocation stream of all `chains`.
///
/// Each chain draws from its own substreams keyed by `(seed, chain id)`, so
/// adding or removing a chain leaves the others untouched. The stream is
/// ordered by (arrival time, chain id, sequence number) and ids are assigned
/// in that order.
pub fn generate_invocations(chains: &[ChainSpec], seed: u64) -> Vec<Invocation> {
    let mut out = Vec::new();
    for (index, chain) in chains.iter().enumerate() {
        let mut demand_rng = substream(seed, &[b"demand", chain.id.as_bytes()]);
        for (seq, arrival_time) in arrival_times(chain, seed).into_iter().enumerate() {
            let demands = chain
                .functions
                .iter()
                .map(|f| match f.demand_distribution {
                    DemandDistribution::Fixed => f.demand,
                    DemandDistribution::Exponential => exponential(&mut demand_rng, 1.0 / f.demand),
                })
                .collect();
            out.push(Invocation {
                id: 0,
                chain: index,
                seq: seq as u64,
                arrival_time,
                demands,
            });
        }
    }
    out.sort_by(|x, y| {
        x.arrival_time
            .total_cmp(&y.arrival_time)
            .then_with(|| chains[x.chain].id.cmp(&chains[y.chain].id))
            .then_with(|| x.seq.cmp(&y.seq))
    });
    for (id, inv) in out.iter_mut().enumerate() {
        inv.id = id as u64;
    }
    out
}
