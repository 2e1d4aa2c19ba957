// SPDX-License-Identifier: MIT

//! Executor selection for the models that leave placement free.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    RoundRobin,
    LeastLoaded,
    Closest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy {
    pub kind: PolicyKind,
}

impl Policy {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.kind {
            PolicyKind::Random => "random",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::LeastLoaded => "least_loaded",
            PolicyKind::Closest => "closest",
        };
        f.write_str(s)
    }
}

/// What the dispatcher knows when it places a function.
pub struct Context<'a> {
    pub client: NodeId,
    /// Chain index, used by round robin to keep one cursor per chain.
    pub chain: usize,
    pub topology: &'a Topology,
    /// Outstanding compute operations per node; absent nodes are idle.
    pub pending: &'a BTreeMap<NodeId, f64>,
}

/// Outstanding compute per node: work assigned to a node and not yet
/// completed. The book is what [`PolicyKind::LeastLoaded`] minimizes.
#[derive(Debug, Clone, Default)]
pub struct LoadBook {
    ops: BTreeMap<NodeId, f64>,
    tasks: BTreeMap<NodeId, usize>,
}

impl LoadBook {
    pub fn add(&mut self, node: NodeId, ops: f64) {
        *self.ops.entry(node).or_insert(0.0) += ops;
        *self.tasks.entry(node).or_insert(0) += 1;
    }

    pub fn remove(&mut self, node: NodeId, ops: f64) {
        let tasks = self.tasks.entry(node).or_insert(0);
        *tasks = tasks.saturating_sub(1);
        if *tasks == 0 {
            // no rounding residue once the node drains
            self.ops.insert(node, 0.0);
        } else {
            *self.ops.entry(node).or_insert(0.0) -= ops;
        }
    }

    pub fn pending(&self) -> &BTreeMap<NodeId, f64> {
        &self.ops
    }
}

/// A placement policy plus its round-robin cursors.
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: Policy,
    cursors: BTreeMap<usize, usize>,
}

impl Scheduler {
    pub fn new(policy: Policy) -> Self {
        Self {
            policy,
            cursors: BTreeMap::new(),
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Picks one of `candidates`, which must be non-empty and sorted by id.
    /// Only the random policy draws from `rng`.
    pub fn choose_executor<R: Rng + ?Sized>(
        &mut self,
        candidates: &[NodeId],
        ctx: &Context<'_>,
        rng: &mut R,
    ) -> NodeId {
        assert!(!candidates.is_empty(), "no candidate executors");
        if candidates.len() == 1 && self.policy.kind != PolicyKind::RoundRobin {
            return candidates[0];
        }
        match self.policy.kind {
            PolicyKind::Random => candidates[rng.random_range(0..candidates.len())],
            PolicyKind::RoundRobin => {
                let cursor = self.cursors.entry(ctx.chain).or_insert(0);
                let chosen = candidates[*cursor % candidates.len()];
                *cursor += 1;
                chosen
            }
            PolicyKind::LeastLoaded => {
                argmin(candidates, |n| ctx.pending.get(&n).copied().unwrap_or(0.0))
            }
            PolicyKind::Closest => argmin(candidates, |n| {
                ctx.topology
                    .shortest_path(ctx.client, n)
                    .map(|p| ctx.topology.path_latency(p))
                    .unwrap_or(f64::INFINITY)
            }),
        }
    }
}

/// First candidate with the minimum cost; candidates are in id order so
/// ties go to the lowest id.
fn argmin(candidates: &[NodeId], cost: impl Fn(NodeId) -> f64) -> NodeId {
    let mut best = candidates[0];
    let mut best_cost = cost(best);
    for &c in &candidates[1..] {
        let v = cost(c);
        if v < best_cost {
            best = c;
            best_cost = v;
        }
    }
    best
}
