// SPDX-License-Identifier: MIT

#![allow(dead_code)]

use std::collections::BTreeSet;

use edge_faas::topology::{Link, Node, NodeId, Role, Topology, TopologySpec};
use edge_faas::workload::{
    ArrivalKind, ArrivalProcess, ChainSpec, DemandDistribution, FunctionSpec,
};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Latencies are multiples of 1/1024 s so that sums are exact in f64.
pub const LATENCY_QUANTUM: f64 = 1.0 / 1024.0;

pub fn node(id: u32, speed: f64, roles: &[Role]) -> Node {
    Node {
        id: NodeId(id),
        speed,
        roles: roles.iter().copied().collect(),
    }
}

pub fn link(a: u32, b: u32, capacity: f64, latency: f64) -> Link {
    Link {
        endpoint_a: NodeId(a),
        endpoint_b: NodeId(b),
        capacity,
        latency,
    }
}

/// Random connected graph on `n` nodes: a random spanning tree plus extra
/// edges. Node 0 is a client; every other node is an executor and/or a state
/// store, with at least one of each.
pub fn random_topology<R: Rng>(rng: &mut R, n: usize) -> Topology {
    assert!(n >= 1);
    let mut nodes = vec![node(0, 1e9, &[Role::Client])];
    for id in 1..n as u32 {
        let roles: &[Role] = match rng.random_range(0..3) {
            0 => &[Role::Executor],
            1 => &[Role::StateStore],
            _ => &[Role::Executor, Role::StateStore],
        };
        let speed = [5e8, 1e9, 2e9][rng.random_range(0..3)];
        nodes.push(node(id, speed, roles));
    }
    if n == 1 {
        nodes[0].roles = [Role::Client, Role::Executor, Role::StateStore].into();
    } else {
        nodes[1].roles.insert(Role::Executor);
        nodes[n - 1].roles.insert(Role::StateStore);
    }

    let mut pairs = BTreeSet::new();
    let mut links = vec![];
    let mut add = |a: u32, b: u32, rng: &mut R| {
        let key = (a.min(b), a.max(b));
        if a != b && pairs.insert(key) {
            let latency = rng.random_range(0..=4) as f64 * LATENCY_QUANTUM;
            let capacity = [1e6, 1e7, 1e8][rng.random_range(0..3)];
            links.push(link(a, b, capacity, latency));
        }
    };
    for id in 1..n as u32 {
        let parent = rng.random_range(0..id);
        add(parent, id, rng);
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        add(a, b, rng);
    }
    Topology::build(TopologySpec { nodes, links }).expect("generated topology is valid")
}

/// Every simple path from `src` to `dst`, with its latency summed from `src`.
pub fn all_simple_paths(topology: &Topology, src: NodeId, dst: NodeId) -> Vec<(f64, Vec<NodeId>)> {
    fn dfs(
        topology: &Topology,
        at: NodeId,
        dst: NodeId,
        latency: f64,
        path: &mut Vec<NodeId>,
        out: &mut Vec<(f64, Vec<NodeId>)>,
    ) {
        if at == dst {
            out.push((latency, path.clone()));
            return;
        }
        for (next, link) in topology.neighbors(at).unwrap() {
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            dfs(
                topology,
                next,
                dst,
                latency + topology.link(link).latency,
                path,
                out,
            );
            path.pop();
        }
    }
    let mut out = vec![];
    dfs(topology, src, dst, 0.0, &mut vec![src], &mut out);
    out
}

pub fn function(id: &str, demand: f64, input_bytes: u64, output_bytes: u64) -> FunctionSpec {
    FunctionSpec {
        id: id.into(),
        demand,
        demand_distribution: DemandDistribution::Fixed,
        input_bytes,
        output_bytes,
    }
}

pub fn poisson(rate: f64, stop: f64) -> ArrivalProcess {
    ArrivalProcess {
        kind: ArrivalKind::Poisson,
        rate,
        start: 0.0,
        stop,
    }
}

/// Random chains issued by the client nodes of `topology`.
pub fn random_chains<R: Rng>(rng: &mut R, topology: &Topology, count: usize) -> Vec<ChainSpec> {
    let clients = topology.nodes_with_role(Role::Client);
    (0..count)
        .map(|i| {
            let k = rng.random_range(1..=4);
            ChainSpec {
                id: format!("chain{i}"),
                client: *clients.choose(rng).unwrap(),
                state_bytes: [0, 100, 10_000, 100_000][rng.random_range(0..4)],
                functions: (0..k)
                    .map(|j| {
                        function(
                            &format!("f{j}"),
                            rng.random_range(1e5..5e7),
                            rng.random_range(0..20_000),
                            rng.random_range(0..20_000),
                        )
                    })
                    .collect(),
                arrival: ArrivalProcess {
                    kind: if rng.random_bool(0.5) {
                        ArrivalKind::Poisson
                    } else {
                        ArrivalKind::Deterministic
                    },
                    rate: rng.random_range(0.5..20.0),
                    start: 0.0,
                    stop: rng.random_range(1.0..10.0),
                },
            }
        })
        .collect()
}
