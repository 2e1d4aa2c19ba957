// SPDX-License-Identifier: MIT

//! The four stateful execution models and the plans they compile.
//!
//! Each model places a chain's state somewhere different, which changes the
//! messages an invocation exchanges:
//!
//! - [`ExecutionModel::ClientState`]: the client owns the state and ships it
//!   with every message along the chain, and it comes back with the response.
//! - [`ExecutionModel::RemoteState`]: the state lives on a state store; every
//!   function fetches it before running and writes it back afterwards.
//! - [`ExecutionModel::LocalState`]: the state lives on one executor and the
//!   whole chain runs there, so only input and output travel.
//! - [`ExecutionModel::StatePropagation`]: the state travels with the chain
//!   like in client state, but stays on the last executor instead of
//!   returning to the client.
//!
//! With a zero-byte state every model compiles to the same stateless plan.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scheduler::{Context, LoadBook, Scheduler};
use crate::topology::{NodeId, Role, Topology};
use crate::workload::{ChainSpec, Invocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionModel {
    ClientState,
    RemoteState,
    LocalState,
    StatePropagation,
}

impl ExecutionModel {
    pub const ALL: [ExecutionModel; 4] = [
        ExecutionModel::ClientState,
        ExecutionModel::RemoteState,
        ExecutionModel::LocalState,
        ExecutionModel::StatePropagation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExecutionModel::ClientState => "client_state",
            ExecutionModel::RemoteState => "remote_state",
            ExecutionModel::LocalState => "local_state",
            ExecutionModel::StatePropagation => "state_propagation",
        }
    }

    /// Role the state holder must have under this model, if constrained.
    pub fn holder_role(&self) -> Option<Role> {
        match self {
            ExecutionModel::RemoteState => Some(Role::StateStore),
            ExecutionModel::LocalState => Some(Role::Executor),
            ExecutionModel::ClientState | ExecutionModel::StatePropagation => None,
        }
    }
}

impl fmt::Display for ExecutionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecutionModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExecutionModel::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown execution model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("no node with role executor")]
    NoExecutorAvailable,
    #[error("chain {chain}: inconsistent state directory: {reason}")]
    InconsistentDirectory { chain: String, reason: String },
    #[error("chain {chain}: {got} executors for {expected} functions")]
    ExecutorCountMismatch {
        chain: String,
        expected: usize,
        got: usize,
    },
}

/// Where each chain's state currently resides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDirectory {
    holders: BTreeMap<String, NodeId>,
}

impl StateDirectory {
    /// Initial holders for `model`.
    ///
    /// Client state and state propagation start with the state at the client.
    /// Remote and local state use the holder in `overrides` when present,
    /// otherwise the state store (resp. executor) with the lowest latency from
    /// the chain's client, lowest id first. Chains without state get no entry.
    pub fn initial(
        model: ExecutionModel,
        chains: &[ChainSpec],
        topology: &Topology,
        overrides: &BTreeMap<String, NodeId>,
    ) -> Result<Self, ModelError> {
        let mut holders = BTreeMap::new();
        for chain in chains.iter().filter(|c| c.state_bytes > 0) {
            let holder = match model.holder_role() {
                None => chain.client,
                Some(role) => match overrides.get(&chain.id) {
                    Some(&node) => node,
                    None => closest_with_role(topology, chain.client, role).ok_or_else(|| {
                        ModelError::InconsistentDirectory {
                            chain: chain.id.clone(),
                            reason: format!("no node with role {role} to hold the state"),
                        }
                    })?,
                },
            };
            holders.insert(chain.id.clone(), holder);
        }
        let directory = Self { holders };
        directory.validate(model, chains, topology)?;
        Ok(directory)
    }

    pub fn from_holders(holders: BTreeMap<String, NodeId>) -> Self {
        Self { holders }
    }

    pub fn holder(&self, chain: &str) -> Option<NodeId> {
        self.holders.get(chain).copied()
    }

    pub fn set_holder(&mut self, chain: &str, node: NodeId) {
        self.holders.insert(chain.to_string(), node);
    }

    pub fn holders(&self) -> &BTreeMap<String, NodeId> {
        &self.holders
    }

    /// Every stateful chain has a holder with the role `model` requires.
    pub fn validate(
        &self,
        model: ExecutionModel,
        chains: &[ChainSpec],
        topology: &Topology,
    ) -> Result<(), ModelError> {
        for chain in chains.iter().filter(|c| c.state_bytes > 0) {
            let inconsistent = |reason: String| ModelError::InconsistentDirectory {
                chain: chain.id.clone(),
                reason,
            };
            let holder = self
                .holder(&chain.id)
                .ok_or_else(|| inconsistent("no holder".into()))?;
            let node = topology
                .node(holder)
                .map_err(|_| inconsistent(format!("unknown holder node {holder}")))?;
            if let Some(role) = model.holder_role() {
                if !node.has_role(role) {
                    return Err(inconsistent(format!(
                        "holder {holder} lacks role {role} required by {model}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn closest_with_role(topology: &Topology, from: NodeId, role: Role) -> Option<NodeId> {
    topology
        .nodes_with_role(role)
        .iter()
        .map(|&n| {
            let latency = topology
                .shortest_path(from, n)
                .map(|p| topology.path_latency(p))
                .unwrap_or(f64::INFINITY);
            (latency, n)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, n)| n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Step {
    Transfer {
        src: NodeId,
        dst: NodeId,
        bytes: u64,
    },
    Compute {
        node: NodeId,
        ops: f64,
    },
}

impl Step {
    pub fn bytes(&self) -> u64 {
        match self {
            Step::Transfer { bytes, .. } => *bytes,
            Step::Compute { .. } => 0,
        }
    }
}

/// The ordered steps realizing one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub invocation: u64,
    pub steps: Vec<Step>,
}

impl Plan {
    pub fn total_payload_bytes(&self) -> u64 {
        self.steps.iter().map(Step::bytes).sum()
    }

    /// Bytes of every Transfer, in order.
    pub fn transfer_bytes(&self) -> Vec<u64> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Transfer { bytes, .. } => Some(*bytes),
                Step::Compute { .. } => None,
            })
            .collect()
    }

    pub fn compute_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Compute { .. }))
            .count()
    }

    /// Traffic cost: bytes times hops of the routed path, summed over transfers.
    pub fn byte_hops(&self, topology: &Topology) -> u64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Transfer { src, dst, bytes } => {
                    let hops = topology
                        .shortest_path(*src, *dst)
                        .map(|p| p.hop_count())
                        .unwrap_or(0);
                    bytes * hops as u64
                }
                Step::Compute { .. } => 0,
            })
            .sum()
    }

    /// Each Compute runs where the data already is: on the destination of the
    /// preceding Transfer, on the node of a preceding Compute, or on the
    /// client when it is the first step.
    pub fn is_causally_chained(&self, client: NodeId) -> bool {
        let mut location = client;
        for step in &self.steps {
            match *step {
                Step::Transfer { dst, .. } => location = dst,
                Step::Compute { node, .. } => {
                    if node != location {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Chooses one executor per function of `invocation`.
///
/// Local state with a non-empty state pins the whole chain on the holder;
/// otherwise each function is placed by `scheduler` over the executor nodes.
/// The chosen work is recorded in `load` so that later decisions, including
/// the next function of the same chain, see it.
#[allow(clippy::too_many_arguments)]
pub fn assign_executors<R: Rng + ?Sized>(
    invocation: &Invocation,
    chain: &ChainSpec,
    model: ExecutionModel,
    topology: &Topology,
    scheduler: &mut Scheduler,
    directory: &StateDirectory,
    load: &mut LoadBook,
    rng: &mut R,
) -> Result<Vec<NodeId>, ModelError> {
    let k = chain.len();
    if model == ExecutionModel::LocalState && chain.state_bytes > 0 {
        let holder =
            directory
                .holder(&chain.id)
                .ok_or_else(|| ModelError::InconsistentDirectory {
                    chain: chain.id.clone(),
                    reason: "no holder".into(),
                })?;
        for &ops in &invocation.demands {
            load.add(holder, ops);
        }
        return Ok(vec![holder; k]);
    }

    let candidates = topology.nodes_with_role(Role::Executor);
    if candidates.is_empty() {
        return Err(ModelError::NoExecutorAvailable);
    }
    let mut executors = Vec::with_capacity(k);
    for &ops in &invocation.demands {
        let ctx = Context {
            client: chain.client,
            chain: invocation.chain,
            topology,
            pending: load.pending(),
        };
        let chosen = scheduler.choose_executor(candidates, &ctx, rng);
        load.add(chosen, ops);
        executors.push(chosen);
    }
    Ok(executors)
}

/// Compiles `invocation` into the model's canonical step sequence.
pub fn compile_plan(
    invocation: &Invocation,
    chain: &ChainSpec,
    executors: &[NodeId],
    model: ExecutionModel,
    directory: &StateDirectory,
) -> Result<Plan, ModelError> {
    let k = chain.len();
    if executors.len() != k || invocation.demands.len() != k {
        return Err(ModelError::ExecutorCountMismatch {
            chain: chain.id.clone(),
            expected: k,
            got: executors.len(),
        });
    }
    let s = chain.state_bytes;
    let c = chain.client;
    let f = &chain.functions;
    let w = &invocation.demands;
    let mut steps = Vec::with_capacity(4 * k + 2);
    let transfer = |src, dst, bytes| Step::Transfer { src, dst, bytes };

    let holder = || {
        directory
            .holder(&chain.id)
            .ok_or_else(|| ModelError::InconsistentDirectory {
                chain: chain.id.clone(),
                reason: "no holder".into(),
            })
    };

    if s == 0 {
        steps.push(transfer(c, executors[0], f[0].input_bytes));
        for i in 0..k {
            if i > 0 {
                steps.push(transfer(executors[i - 1], executors[i], f[i].input_bytes));
            }
            steps.push(Step::Compute {
                node: executors[i],
                ops: w[i],
            });
        }
        steps.push(transfer(executors[k - 1], c, f[k - 1].output_bytes));
        return Ok(Plan {
            invocation: invocation.id,
            steps,
        });
    }

    match model {
        ExecutionModel::ClientState | ExecutionModel::StatePropagation => {
            steps.push(transfer(c, executors[0], f[0].input_bytes + s));
            for i in 0..k {
                if i > 0 {
                    steps.push(transfer(
                        executors[i - 1],
                        executors[i],
                        f[i].input_bytes + s,
                    ));
                }
                steps.push(Step::Compute {
                    node: executors[i],
                    ops: w[i],
                });
            }
            let response = match model {
                ExecutionModel::ClientState => f[k - 1].output_bytes + s,
                _ => f[k - 1].output_bytes,
            };
            steps.push(transfer(executors[k - 1], c, response));
        }
        ExecutionModel::RemoteState => {
            let r = holder()?;
            steps.push(transfer(c, executors[0], f[0].input_bytes));
            for i in 0..k {
                steps.push(transfer(r, executors[i], s));
                steps.push(Step::Compute {
                    node: executors[i],
                    ops: w[i],
                });
                steps.push(transfer(executors[i], r, s));
                if i + 1 < k {
                    steps.push(transfer(
                        executors[i],
                        executors[i + 1],
                        f[i + 1].input_bytes,
                    ));
                }
            }
            steps.push(transfer(executors[k - 1], c, f[k - 1].output_bytes));
        }
        ExecutionModel::LocalState => {
            let r = holder()?;
            if let Some(e) = executors.iter().find(|&&e| e != r) {
                return Err(ModelError::InconsistentDirectory {
                    chain: chain.id.clone(),
                    reason: format!("executor {e} differs from state holder {r}"),
                });
            }
            steps.push(transfer(c, r, f[0].input_bytes));
            steps.extend(w.iter().map(|&ops| Step::Compute { node: r, ops }));
            steps.push(transfer(r, c, f[k - 1].output_bytes));
        }
    }
    Ok(Plan {
        invocation: invocation.id,
        steps,
    })
}

/// Updates the directory once an invocation's plan has completed: under
/// state propagation the state now lives on the last executor.
pub fn on_completion(
    chain: &ChainSpec,
    executors: &[NodeId],
    model: ExecutionModel,
    directory: &mut StateDirectory,
) {
    if model == ExecutionModel::StatePropagation && chain.state_bytes > 0 {
        if let Some(&last) = executors.last() {
            directory.set_holder(&chain.id, last);
        }
    }
}
