// SPDX-License-Identifier: MIT

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edge_faas::models::compile_plan;
use edge_faas::workload::generate_invocations;
use edge_faas::{
    run, ExecutionModel, NodeId, Policy, PolicyKind, RunOptions, StateDirectory, TopologySpec,
};
use edge_faas_bench::{chain, grid};

fn topology(c: &mut Criterion) {
    let mut group = c.benchmark_group("topology_build");
    for side in [4u32, 8, 12] {
        let t = grid(side);
        let spec = TopologySpec {
            nodes: t.nodes().to_vec(),
            links: t.links().to_vec(),
        };
        group.bench_with_input(
            BenchmarkId::from_parameter(side * side),
            &spec,
            |b, spec| b.iter(|| edge_faas::Topology::build(black_box(spec.clone())).unwrap()),
        );
    }
    group.finish();
}

fn plans(c: &mut Criterion) {
    let t = grid(6);
    let executors: Vec<NodeId> = t.nodes_with_role(edge_faas::Role::Executor)[..8].to_vec();
    let ch = chain(8, 10_000, 10.0, 10.0);
    let invocation = generate_invocations(std::slice::from_ref(&ch), 1).remove(0);
    let mut group = c.benchmark_group("compile_plan");
    for model in ExecutionModel::ALL {
        let directory =
            StateDirectory::initial(model, std::slice::from_ref(&ch), &t, &BTreeMap::new())
                .unwrap();
        let execs = if model == ExecutionModel::LocalState {
            vec![directory.holder("bench").unwrap(); 8]
        } else {
            executors.clone()
        };
        group.bench_function(model.as_str(), |b| {
            b.iter(|| compile_plan(black_box(&invocation), &ch, &execs, model, &directory).unwrap())
        });
    }
    group.finish();
}

fn engine(c: &mut Criterion) {
    let t = grid(6);
    let chains = [chain(4, 10_000, 200.0, 10.0)];
    let mut group = c.benchmark_group("engine_run");
    group.sample_size(20);
    for model in ExecutionModel::ALL {
        group.bench_function(model.as_str(), |b| {
            b.iter(|| {
                run(
                    &t,
                    &chains,
                    model,
                    Policy::new(PolicyKind::LeastLoaded),
                    black_box(7),
                    f64::INFINITY,
                    &RunOptions::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, topology, plans, engine);
criterion_main!(benches);
