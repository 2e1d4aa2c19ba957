// SPDX-License-Identifier: MIT

//! Edge network graph: nodes with a processing speed, bidirectional links
//! with a capacity and a propagation latency, and static latency-optimal
//! routes computed once when the topology is built.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a link in [`Topology::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Executor,
    StateStore,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Client => "client",
            Role::Executor => "executor",
            Role::StateStore => "state_store",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    /// Processing speed, in operations/s.
    pub speed: f64,
    pub roles: BTreeSet<Role>,
}

impl Node {
    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    #[serde(rename = "a")]
    pub endpoint_a: NodeId,
    #[serde(rename = "b")]
    pub endpoint_b: NodeId,
    /// Capacity, in bytes/s.
    pub capacity: f64,
    /// Propagation latency, in s.
    pub latency: f64,
}

impl Link {
    /// The endpoint opposite to `node`, if `node` is one of the endpoints.
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if node == self.endpoint_a {
            Some(self.endpoint_b)
        } else if node == self.endpoint_b {
            Some(self.endpoint_a)
        } else {
            None
        }
    }

    /// Serialization time of a message on this link, in s.
    pub fn serialization_time(&self, bytes: u64) -> f64 {
        bytes as f64 / self.capacity
    }
}

/// Unvalidated topology description, as found in the experiment document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("link {link} references unknown node {node}")]
    DanglingLinkEndpoint { link: usize, node: NodeId },
    #[error("the graph is disconnected: node {0} is unreachable from node {1}")]
    DisconnectedGraph(NodeId, NodeId),
    #[error("non-positive {what} on {item}")]
    NonPositiveCapacityOrSpeed { what: &'static str, item: String },
    #[error("link {0} has a negative or non-finite latency")]
    InvalidLatency(usize),
    #[error("link {0} connects a node to itself")]
    SelfLoop(usize),
    #[error("more than one link between nodes {0} and {1}")]
    DuplicateLink(NodeId, NodeId),
    #[error("node {0} has no roles")]
    EmptyRoles(NodeId),
    #[error("no node with role {0}")]
    MissingRole(Role),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no path from {0} to {1}")]
    NoPath(NodeId, NodeId),
}

/// A loop-free route through the topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Path {
    pub fn single(node: NodeId) -> Self {
        Self {
            nodes: vec![node],
            links: vec![],
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn hop_count(&self) -> usize {
        self.links.len()
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("a path has at least one node")
    }
}

/// Dijkstra label: total latency, then the node sequence for tie-breaking.
#[derive(Debug, Clone)]
struct Label {
    latency: f64,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Label {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.latency
            .total_cmp(&other.latency)
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.cmp_key(self)
    }
}

/// A validated edge network with cached all-pairs routes.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, LinkId)>>,
    routes: Vec<Vec<Path>>,
    by_role: BTreeMap<Role, Vec<NodeId>>,
}

impl Topology {
    /// Validates `spec` and precomputes the routes between every node pair.
    pub fn build(spec: TopologySpec) -> Result<Self, TopologyError> {
        let TopologySpec { mut nodes, links } = spec;
        nodes.sort_by_key(|n| n.id);

        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(TopologyError::DuplicateNodeId(node.id));
            }
            if !(node.speed > 0.0 && node.speed.is_finite()) {
                return Err(TopologyError::NonPositiveCapacityOrSpeed {
                    what: "speed",
                    item: format!("node {}", node.id),
                });
            }
            if node.roles.is_empty() {
                return Err(TopologyError::EmptyRoles(node.id));
            }
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut pairs = BTreeSet::new();
        for (i, link) in links.iter().enumerate() {
            for endpoint in [link.endpoint_a, link.endpoint_b] {
                if !index.contains_key(&endpoint) {
                    return Err(TopologyError::DanglingLinkEndpoint {
                        link: i,
                        node: endpoint,
                    });
                }
            }
            if link.endpoint_a == link.endpoint_b {
                return Err(TopologyError::SelfLoop(i));
            }
            if !(link.capacity > 0.0) {
                return Err(TopologyError::NonPositiveCapacityOrSpeed {
                    what: "capacity",
                    item: format!("link {i}"),
                });
            }
            if !(link.latency >= 0.0 && link.latency.is_finite()) {
                return Err(TopologyError::InvalidLatency(i));
            }
            let pair = (
                link.endpoint_a.min(link.endpoint_b),
                link.endpoint_a.max(link.endpoint_b),
            );
            if !pairs.insert(pair) {
                return Err(TopologyError::DuplicateLink(pair.0, pair.1));
            }
            let a = index[&link.endpoint_a];
            let b = index[&link.endpoint_b];
            adjacency[a].push((b, LinkId(i)));
            adjacency[b].push((a, LinkId(i)));
        }

        for role in [Role::Client, Role::Executor] {
            if !nodes.iter().any(|n| n.has_role(role)) {
                return Err(TopologyError::MissingRole(role));
            }
        }

        let mut by_role: BTreeMap<Role, Vec<NodeId>> = BTreeMap::new();
        for node in &nodes {
            for &role in &node.roles {
                by_role.entry(role).or_default().push(node.id);
            }
        }

        let mut topology = Self {
            nodes,
            links,
            index,
            adjacency,
            routes: vec![],
            by_role,
        };
        let mut routes = Vec::with_capacity(topology.nodes.len());
        for src in 0..topology.nodes.len() {
            let row = topology.dijkstra(src);
            let mut paths = Vec::with_capacity(row.len());
            for (dst, label) in row.into_iter().enumerate() {
                match label {
                    Some(label) => paths.push(Path {
                        nodes: label.nodes,
                        links: label.links,
                    }),
                    None => {
                        return Err(TopologyError::DisconnectedGraph(
                            topology.nodes[dst].id,
                            topology.nodes[src].id,
                        ))
                    }
                }
            }
            routes.push(paths);
        }
        topology.routes = routes;
        Ok(topology)
    }

    /// Single-source Dijkstra over link latency. Labels are compared by
    /// (latency, node sequence), which is preserved under path extension, so
    /// the settled label of each node is its lexicographically smallest
    /// minimum-latency path.
    fn dijkstra(&self, src: usize) -> Vec<Option<Label>> {
        let n = self.nodes.len();
        let mut best: Vec<Option<Label>> = vec![None; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        let start = Label {
            latency: 0.0,
            nodes: vec![self.nodes[src].id],
            links: vec![],
        };
        best[src] = Some(start.clone());
        heap.push((start, src));

        while let Some((label, u)) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            for &(v, link) in &self.adjacency[u] {
                if settled[v] {
                    continue;
                }
                let mut nodes = label.nodes.clone();
                nodes.push(self.nodes[v].id);
                let mut links = label.links.clone();
                links.push(link);
                let candidate = Label {
                    latency: label.latency + self.links[link.0].latency,
                    nodes,
                    links,
                };
                let improves = match &best[v] {
                    None => true,
                    Some(current) => candidate.cmp_key(current) == Ordering::Less,
                };
                if improves {
                    best[v] = Some(candidate.clone());
                    heap.push((candidate, v));
                }
            }
        }
        best
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.index
            .get(&id)
            .map(|&i| &self.nodes[i])
            .ok_or(TopologyError::UnknownNode(id))
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    /// Ids of the nodes having `role`, in increasing order.
    pub fn nodes_with_role(&self, role: Role) -> &[NodeId] {
        self.by_role.get(&role).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of `id` in [`Topology::nodes`].
    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Neighbours of `id` with the connecting link, in link order.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<(NodeId, LinkId)>, TopologyError> {
        let i = *self.index.get(&id).ok_or(TopologyError::UnknownNode(id))?;
        Ok(self.adjacency[i]
            .iter()
            .map(|&(v, l)| (self.nodes[v].id, l))
            .collect())
    }

    /// The cached minimum-latency route from `src` to `dst`.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Result<&Path, TopologyError> {
        let s = *self
            .index
            .get(&src)
            .ok_or(TopologyError::UnknownNode(src))?;
        let d = *self
            .index
            .get(&dst)
            .ok_or(TopologyError::UnknownNode(dst))?;
        self.routes
            .get(s)
            .and_then(|row| row.get(d))
            .ok_or(TopologyError::NoPath(src, dst))
    }

    /// Sum of the propagation latencies along `path`.
    pub fn path_latency(&self, path: &Path) -> f64 {
        path.links
            .iter()
            .fold(0.0, |acc, l| acc + self.links[l.0].latency)
    }

    /// Uncontended time to deliver `message_bytes` along `path`:
    /// per hop, serialization at the link capacity plus propagation latency.
    pub fn transfer_delay(&self, path: &Path, message_bytes: u64) -> f64 {
        path.links.iter().fold(0.0, |acc, l| {
            let link = &self.links[l.0];
            acc + link.serialization_time(message_bytes) + link.latency
        })
    }
}
