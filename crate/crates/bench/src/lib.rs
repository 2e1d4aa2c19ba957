// SPDX-License-Identifier: MIT

//! Fixtures shared by the benchmarks.

use edge_faas::topology::{Link, Node};
use edge_faas::workload::{ArrivalKind, ArrivalProcess, DemandDistribution};
use edge_faas::{ChainSpec, FunctionSpec, NodeId, Role, Topology, TopologySpec};

/// `side` x `side` grid; node 0 is the client, the opposite corner the state
/// store, and every other node an executor.
pub fn grid(side: u32) -> Topology {
    let id = |r: u32, c: u32| r * side + c;
    let last = side * side - 1;
    let nodes = (0..side * side)
        .map(|i| Node {
            id: NodeId(i),
            speed: 1e9,
            roles: match i {
                0 => [Role::Client].into(),
                i if i == last => [Role::StateStore].into(),
                _ => [Role::Executor].into(),
            },
        })
        .collect();
    let mut links = vec![];
    for r in 0..side {
        for c in 0..side {
            let mut push = |b: u32| {
                links.push(Link {
                    endpoint_a: NodeId(id(r, c)),
                    endpoint_b: NodeId(b),
                    capacity: 1.25e8,
                    latency: 0.001 * (1 + (r + c) % 3) as f64,
                })
            };
            if c + 1 < side {
                push(id(r, c + 1));
            }
            if r + 1 < side {
                push(id(r + 1, c));
            }
        }
    }
    Topology::build(TopologySpec { nodes, links }).expect("grid is valid")
}

/// A chain of `k` identical functions issued by node 0.
pub fn chain(k: usize, state_bytes: u64, rate: f64, stop: f64) -> ChainSpec {
    ChainSpec {
        id: "bench".into(),
        client: NodeId(0),
        state_bytes,
        functions: (0..k)
            .map(|i| FunctionSpec {
                id: format!("f{i}"),
                demand: 5e6,
                demand_distribution: DemandDistribution::Fixed,
                input_bytes: 4000,
                output_bytes: 2000,
            })
            .collect(),
        arrival: ArrivalProcess {
            kind: ArrivalKind::Poisson,
            rate,
            start: 0.0,
            stop,
        },
    }
}
