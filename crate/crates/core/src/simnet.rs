//! Synchronous round-based message passing between subsystems.
//!
//! Two primitives exist: a one-round exchange of scalar vectors between graph
//! neighbors, and an exact network-wide sum of small scalar tuples. Sums run as
//! reduce-then-broadcast over a breadth-first spanning tree rooted at node 0,
//! children visited in ascending id order, so the association order of every
//! floating-point sum is fixed.

use std::collections::VecDeque;
use std::ops::Sub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("topology needs at least one node")]
    Empty,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("node {0} may not send to non-neighbor {1}")]
    NotANeighbor(usize, usize),
    #[error("expected contributions from {expected} nodes, got {found}")]
    WrongNodeCount { expected: usize, found: usize },
    #[error("node {node} contributed {found} scalars, expected {expected}")]
    ArityMismatch { node: usize, expected: usize, found: usize },
}

/// Connected undirected graph with canonically ordered edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    /// Edges are normalized to `(min, max)` and sorted lexicographically.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, NetError> {
        if node_count == 0 {
            return Err(NetError::Empty);
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(NetError::NodeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(NetError::SelfLoop(a));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(NetError::DuplicateEdge(w[0].0, w[0].1));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &list {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let topo = Topology {
            node_count,
            edges: list,
            adjacency,
        };
        let tree = SpanningTree::bfs(&topo);
        if let Some(v) = tree
            .parent
            .iter()
            .enumerate()
            .skip(1)
            .find_map(|(v, p)| p.is_none().then_some(v))
        {
            return Err(NetError::Disconnected(v));
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `v` in ascending order (excluding `v`).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Position of edge `(a, b)` in the canonical order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }
}

#[derive(Debug, Clone)]
struct SpanningTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// BFS visiting order; reversed it is a valid reduction order.
    order: Vec<usize>,
    depth: usize,
}

impl SpanningTree {
    fn bfs(topo: &Topology) -> SpanningTree {
        let n = topo.node_count;
        let mut parent = vec![None; n];
        let mut level = vec![usize::MAX; n];
        let mut children = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        level[0] = 0;
        queue.push_back(0);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &topo.adjacency[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    parent[w] = Some(v);
                    children[v].push(w);
                    queue.push_back(w);
                }
            }
        }
        let depth = order.iter().map(|&v| level[v]).max().unwrap_or(0);
        SpanningTree {
            parent,
            children,
            order,
            depth,
        }
    }
}

/// Cumulative communication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    /// Invocations of [`Network::neighbor_exchange`].
    pub neighbor_exchanges: u64,
    /// Point-to-point messages delivered by neighbor exchanges.
    pub neighbor_messages: u64,
    /// Total scalar payload carried by those messages.
    pub neighbor_scalars_sent: u64,
    pub global_sum_invocations: u64,
    pub rounds: u64,
}

impl Sub for CommStats {
    type Output = CommStats;

    fn sub(self, rhs: CommStats) -> CommStats {
        CommStats {
            neighbor_exchanges: self.neighbor_exchanges - rhs.neighbor_exchanges,
            neighbor_messages: self.neighbor_messages - rhs.neighbor_messages,
            neighbor_scalars_sent: self.neighbor_scalars_sent - rhs.neighbor_scalars_sent,
            global_sum_invocations: self.global_sum_invocations - rhs.global_sum_invocations,
            rounds: self.rounds - rhs.rounds,
        }
    }
}

/// Outgoing messages of one node: `(destination, payload)`.
pub type Outbox = Vec<(usize, Vec<f64>)>;
/// Received messages of one node: `(sender, payload)`, ascending by sender.
pub type Inbox = Vec<(usize, Vec<f64>)>;

/// Result of a network-wide sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSum {
    /// The tuple every node holds after the broadcast.
    pub per_node: Vec<Vec<f64>>,
    pub rounds: usize,
}

impl GlobalSum {
    /// The (identical) value held by any node.
    pub fn value(&self) -> &[f64] {
        &self.per_node[0]
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    tree: SpanningTree,
    stats: CommStats,
}

impl Network {
    pub fn new(topology: Topology) -> Self {
        let tree = SpanningTree::bfs(&topology);
        Network {
            topology,
            tree,
            stats: CommStats::default(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn stats(&self) -> CommStats {
        self.stats
    }

    /// Depth of the aggregation tree rooted at node 0.
    pub fn tree_depth(&self) -> usize {
        self.tree.depth
    }

    /// Delivers every message in one synchronous round.
    pub fn neighbor_exchange(&mut self, outboxes: Vec<Outbox>) -> Result<Vec<Inbox>, NetError> {
        let n = self.topology.node_count;
        if outboxes.len() != n {
            return Err(NetError::WrongNodeCount {
                expected: n,
                found: outboxes.len(),
            });
        }
        for (from, out) in outboxes.iter().enumerate() {
            for &(to, _) in out {
                if to >= n || !self.topology.are_adjacent(from, to) {
                    return Err(NetError::NotANeighbor(from, to));
                }
            }
        }
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); n];
        let mut messages = 0u64;
        let mut scalars = 0u64;
        for (from, out) in outboxes.into_iter().enumerate() {
            for (to, payload) in out {
                messages += 1;
                scalars += payload.len() as u64;
                inboxes[to].push((from, payload));
            }
        }
        self.stats.neighbor_exchanges += 1;
        self.stats.neighbor_messages += messages;
        self.stats.neighbor_scalars_sent += scalars;
        self.stats.rounds += 1;
        Ok(inboxes)
    }

    /// Exact component-wise sum of one tuple per node, known to every node afterwards.
    pub fn global_sum(&mut self, locals: &[Vec<f64>]) -> Result<GlobalSum, NetError> {
        let n = self.topology.node_count;
        if locals.len() != n {
            return Err(NetError::WrongNodeCount {
                expected: n,
                found: locals.len(),
            });
        }
        let arity = locals[0].len();
        if let Some((node, l)) = locals.iter().enumerate().find(|(_, l)| l.len() != arity) {
            return Err(NetError::ArityMismatch {
                node,
                expected: arity,
                found: l.len(),
            });
        }
        let mut partial: Vec<Vec<f64>> = locals.to_vec();
        for &v in self.tree.order.iter().rev() {
            for k in 0..self.tree.children[v].len() {
                let c = self.tree.children[v][k];
                let (pc, pv) = if c < v {
                    let (lo, hi) = partial.split_at_mut(v);
                    (&lo[c], &mut hi[0])
                } else {
                    let (lo, hi) = partial.split_at_mut(c);
                    (&hi[0], &mut lo[v])
                };
                for (a, b) in pv.iter_mut().zip(pc) {
                    *a += b;
                }
            }
        }
        let total = partial.swap_remove(0);
        let rounds = 2 * self.tree.depth;
        self.stats.global_sum_invocations += 1;
        self.stats.rounds += rounds as u64;
        Ok(GlobalSum {
            per_node: vec![total; n],
            rounds,
        })
    }

    /// Convenience wrapper for one scalar per node.
    pub fn global_sum_scalar(&mut self, locals: &[f64]) -> Result<f64, NetError> {
        let tuples: Vec<Vec<f64>> = locals.iter().map(|&x| vec![x]).collect();
        Ok(self.global_sum(&tuples)?.value()[0])
    }
}
