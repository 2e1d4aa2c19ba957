// SPDX-License-Identifier: MIT

//! Deterministic discrete-event execution of compiled plans.
//!
//! Nodes and links are FIFO servers. A message crosses its route store and
//! forward: on each link it queues, holds the link for `bytes / capacity`,
//! and reaches the next node `latency` seconds later without occupying the
//! link meanwhile. A compute step queues at its node and holds it for
//! `ops / speed`. Steps of a plan run strictly one after the other.
//!
//! Because service times are known on arrival at a server, FIFO is realized
//! by a `busy_until` horizon per server: a request arriving at `t` starts at
//! `max(t, busy_until)`. Requests reach a server in event order, which is
//! (time, sequence) order, so this equals an explicit FIFO queue.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::models::{
    assign_executors, compile_plan, on_completion, ExecutionModel, ModelError, Plan,
    StateDirectory, Step,
};
use crate::rng::substream;
use crate::scheduler::{LoadBook, Policy, Scheduler};
use crate::topology::{LinkId, NodeId, Topology};
use crate::workload::{
    generate_invocations, validate_chains, ChainSpec, Invocation, WorkloadError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("horizon {horizon} s ends before the workload stop time {stop} s")]
    HorizonBeforeWorkloadEnd { horizon: f64, stop: f64 },
}

impl From<WorkloadError> for EngineError {
    fn from(e: WorkloadError) -> Self {
        EngineError::ConfigInvalid(e.to_string())
    }
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        EngineError::ConfigInvalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    InvocationArrival,
    /// A message reached an intermediate node and joins the next link.
    LinkArrival,
    TransferEnd,
    ComputeEnd,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    sequence: u64,
    kind: EventKind,
    /// Index in the invocation stream.
    invocation: usize,
    step: usize,
    hop: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // min-heap on (time, sequence)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Node(NodeId),
    Link(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// The request joined the resource queue.
    Enqueue,
    /// Service started.
    Start,
    /// Service ended; for a compute step the step is complete.
    End,
    /// The message reached the far end of the link.
    Deliver,
}

/// One line of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub resource: Resource,
    pub kind: TraceKind,
    pub invocation: u64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub id: u64,
    pub chain: String,
    pub arrival_time: f64,
    pub completion_time: f64,
    pub latency: f64,
    pub byte_hops: u64,
    pub executors: Vec<NodeId>,
    pub model: ExecutionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ExecutionModel,
    pub policy: Policy,
    pub seed: u64,
    pub horizon: f64,
    /// Invocations that arrived.
    pub arrivals: u64,
    /// Completed invocations, in completion order.
    pub records: Vec<InvocationRecord>,
    /// Invocations still in flight when the run stopped.
    pub residual: u64,
    /// Busy intervals of every node, merged when contiguous.
    pub busy: BTreeMap<NodeId, Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl RunResult {
    pub fn busy_time(&self, node: NodeId) -> f64 {
        self.busy
            .get(&node)
            .map(|v| v.iter().map(|(s, e)| e - s).sum())
            .unwrap_or(0.0)
    }

    /// Time `node` was busy within `[from, to]`.
    pub fn busy_time_within(&self, node: NodeId, from: f64, to: f64) -> f64 {
        self.busy
            .get(&node)
            .map(|v| {
                v.iter()
                    .map(|&(s, e)| (e.min(to) - s.max(from)).max(0.0))
                    .sum()
            })
            .unwrap_or(0.0)
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.latency).collect()
    }
}

/// Conservation: every arrival either completed or is still in flight.
pub fn drain_check(result: &RunResult) -> bool {
    result.arrivals == result.records.len() as u64 + result.residual
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Configured state holders, by chain id.
    pub holders: BTreeMap<String, NodeId>,
    /// Record a per-step trace in [`RunResult::trace`].
    pub trace: bool,
}

struct Active {
    plan: Plan,
    executors: Vec<NodeId>,
    byte_hops: u64,
}

struct Engine<'a> {
    topology: &'a Topology,
    chains: &'a [ChainSpec],
    invocations: Vec<Invocation>,
    model: ExecutionModel,
    directory: StateDirectory,
    scheduler: Scheduler,
    load: LoadBook,
    events: BinaryHeap<Event>,
    sequence: u64,
    node_free: Vec<f64>,
    link_free: Vec<f64>,
    busy: Vec<Vec<(f64, f64)>>,
    active: BTreeMap<usize, Active>,
    records: Vec<InvocationRecord>,
    arrivals: u64,
    trace: Option<Vec<TraceRecord>>,
}

/// Simulates `chains` on `topology` under `model` until the event queue
/// drains or `horizon` passes. The result is a pure function of the inputs
/// and `seed`.
pub fn run(
    topology: &Topology,
    chains: &[ChainSpec],
    model: ExecutionModel,
    policy: Policy,
    seed: u64,
    horizon: f64,
    options: &RunOptions,
) -> Result<RunResult, EngineError> {
    validate_chains(chains, topology)?;
    let stop = chains
        .iter()
        .map(|c| c.arrival.stop)
        .fold(f64::NEG_INFINITY, f64::max);
    if horizon < stop || horizon.is_nan() {
        return Err(EngineError::HorizonBeforeWorkloadEnd { horizon, stop });
    }
    let directory = StateDirectory::initial(model, chains, topology, &options.holders)?;

    let mut engine = Engine {
        topology,
        chains,
        invocations: generate_invocations(chains, seed),
        model,
        directory,
        scheduler: Scheduler::new(policy),
        load: LoadBook::default(),
        events: BinaryHeap::new(),
        sequence: 0,
        node_free: vec![0.0; topology.nodes().len()],
        link_free: vec![0.0; topology.links().len()],
        busy: vec![Vec::new(); topology.nodes().len()],
        active: BTreeMap::new(),
        records: Vec::new(),
        arrivals: 0,
        trace: options.trace.then(Vec::new),
    };
    let mut rng = substream(seed, &[b"scheduler"]);

    for i in 0..engine.invocations.len() {
        let time = engine.invocations[i].arrival_time;
        engine.schedule(time, EventKind::InvocationArrival, i, 0, 0);
    }

    while let Some(event) = engine.events.peek().copied() {
        if event.time > horizon {
            break;
        }
        engine.events.pop();
        let now = event.time;
        match event.kind {
            EventKind::InvocationArrival => {
                engine.arrivals += 1;
                let inv = &engine.invocations[event.invocation];
                let chain = &chains[inv.chain];
                let executors = assign_executors(
                    inv,
                    chain,
                    model,
                    topology,
                    &mut engine.scheduler,
                    &engine.directory,
                    &mut engine.load,
                    &mut rng,
                )?;
                let plan = compile_plan(inv, chain, &executors, model, &engine.directory)?;
                let byte_hops = plan.byte_hops(topology);
                engine.active.insert(
                    event.invocation,
                    Active {
                        plan,
                        executors,
                        byte_hops,
                    },
                );
                engine.start_step(event.invocation, 0, now);
            }
            EventKind::LinkArrival => {
                engine.enter_link(event.invocation, event.step, event.hop, now);
            }
            EventKind::TransferEnd => {
                engine.start_step(event.invocation, event.step + 1, now);
            }
            EventKind::ComputeEnd => {
                if let Step::Compute { node, ops } =
                    engine.active[&event.invocation].plan.steps[event.step]
                {
                    engine.load.remove(node, ops);
                }
                engine.start_step(event.invocation, event.step + 1, now);
            }
        }
    }

    let busy = topology
        .nodes()
        .iter()
        .zip(engine.busy)
        .map(|(n, b)| (n.id, b))
        .collect();
    Ok(RunResult {
        model,
        policy,
        seed,
        horizon,
        arrivals: engine.arrivals,
        residual: engine.active.len() as u64,
        records: engine.records,
        busy,
        trace: engine.trace,
    })
}

impl Engine<'_> {
    fn schedule(&mut self, time: f64, kind: EventKind, invocation: usize, step: usize, hop: usize) {
        self.events.push(Event {
            time,
            sequence: self.sequence,
            kind,
            invocation,
            step,
            hop,
        });
        self.sequence += 1;
    }

    fn emit(
        &mut self,
        time: f64,
        resource: Resource,
        kind: TraceKind,
        invocation: usize,
        step: usize,
    ) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                time,
                resource,
                kind,
                invocation: self.invocations[invocation].id,
                step,
            });
        }
    }

    /// Begins step `step` of `invocation` at `now`; zero-hop transfers finish
    /// on the spot and the plan moves on.
    fn start_step(&mut self, invocation: usize, mut step: usize, now: f64) {
        loop {
            let active = &self.active[&invocation];
            let Some(&current) = active.plan.steps.get(step) else {
                self.complete(invocation, now);
                return;
            };
            match current {
                Step::Transfer { src, dst, .. } => {
                    let hops = self
                        .topology
                        .shortest_path(src, dst)
                        .expect("plan nodes are validated")
                        .hop_count();
                    if hops == 0 {
                        step += 1;
                        continue;
                    }
                    self.enter_link(invocation, step, 0, now);
                }
                Step::Compute { node, ops } => {
                    let index = self
                        .topology
                        .node_index(node)
                        .expect("plan nodes are validated");
                    let speed = self.topology.nodes()[index].speed;
                    let start = now.max(self.node_free[index]);
                    let end = start + ops / speed;
                    self.node_free[index] = end;
                    let intervals = &mut self.busy[index];
                    match intervals.last_mut() {
                        Some(last) if last.1 == start => last.1 = end,
                        _ => intervals.push((start, end)),
                    }
                    let resource = Resource::Node(node);
                    self.emit(now, resource, TraceKind::Enqueue, invocation, step);
                    self.emit(start, resource, TraceKind::Start, invocation, step);
                    self.emit(end, resource, TraceKind::End, invocation, step);
                    self.schedule(end, EventKind::ComputeEnd, invocation, step, 0);
                }
            }
            return;
        }
    }

    /// The message of transfer `step` joins hop `hop` of its route at `now`.
    fn enter_link(&mut self, invocation: usize, step: usize, hop: usize, now: f64) {
        let Step::Transfer { src, dst, bytes } = self.active[&invocation].plan.steps[step] else {
            unreachable!("link events only belong to transfers");
        };
        let path = self
            .topology
            .shortest_path(src, dst)
            .expect("plan nodes are validated");
        let link_id = path.links()[hop];
        let last_hop = hop + 1 == path.hop_count();
        let link = self.topology.link(link_id);
        let start = now.max(self.link_free[link_id.0]);
        let end = start + link.serialization_time(bytes);
        let delivered = end + link.latency;
        self.link_free[link_id.0] = end;

        let resource = Resource::Link(link_id);
        self.emit(now, resource, TraceKind::Enqueue, invocation, step);
        self.emit(start, resource, TraceKind::Start, invocation, step);
        self.emit(end, resource, TraceKind::End, invocation, step);
        self.emit(delivered, resource, TraceKind::Deliver, invocation, step);
        if last_hop {
            self.schedule(delivered, EventKind::TransferEnd, invocation, step, hop);
        } else {
            self.schedule(delivered, EventKind::LinkArrival, invocation, step, hop + 1);
        }
    }

    fn complete(&mut self, invocation: usize, now: f64) {
        let active = self
            .active
            .remove(&invocation)
            .expect("completing an active invocation");
        let inv = &self.invocations[invocation];
        let chain = &self.chains[inv.chain];
        on_completion(chain, &active.executors, self.model, &mut self.directory);
        self.records.push(InvocationRecord {
            id: inv.id,
            chain: chain.id.clone(),
            arrival_time: inv.arrival_time,
            completion_time: now,
            latency: now - inv.arrival_time,
            byte_hops: active.byte_hops,
            executors: active.executors,
            model: self.model,
        });
    }
}
