//! Road graph storage and shortest-path routing.
//!
//! Nodes carry planar coordinates in meters. Node ids are arbitrary `u32`
//! labels; internally nodes are kept sorted by id so that index order and id
//! order agree, which is what makes the lexicographic tie-break cheap.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl core::fmt::Display for NodeId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: u32,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub bidirectional: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("network needs at least 2 nodes and 1 edge")]
    TooSmall,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {edge} has non-positive length {length_m}")]
    NonPositiveLength { edge: u32, length_m: f64 },
    #[error("graph is not strongly connected; orphan component contains node {0}")]
    DisconnectedGraph(NodeId),
}

/// A route through the network.
///
/// `nodes` is empty when origin and destination coincide. `edge_lengths_m[i]`
/// is the length of the hop from `nodes[i]` to `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub edge_lengths_m: Vec<f64>,
    pub total_length_m: f64,
}

impl Path {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    // Adjacency lists sorted by neighbour index, then length.
    out_adj: Vec<Vec<(usize, f64)>>,
    in_adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl RoadNetwork {
    /// Validates and indexes a graph. Rejects graphs that are not strongly
    /// connected, naming the smallest node id outside the component of the
    /// smallest node.
    pub fn new(mut nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, NetworkError> {
        if nodes.len() < 2 || edges.is_empty() {
            return Err(NetworkError::TooSmall);
        }
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(NetworkError::DuplicateNode(pair[0].id));
            }
        }
        let index = |id: NodeId| -> Result<usize, NetworkError> {
            nodes
                .binary_search_by_key(&id, |n| n.id)
                .map_err(|_| NetworkError::UnknownNode(id))
        };

        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        for e in &edges {
            if !(e.length_m > 0.0) || !e.length_m.is_finite() {
                return Err(NetworkError::NonPositiveLength { edge: e.id, length_m: e.length_m });
            }
            let a = index(e.from)?;
            let b = index(e.to)?;
            out_adj[a].push((b, e.length_m));
            in_adj[b].push((a, e.length_m));
            if e.bidirectional {
                out_adj[b].push((a, e.length_m));
                in_adj[a].push((b, e.length_m));
            }
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        }

        let net = Self { nodes, edges, out_adj, in_adj };
        net.check_strongly_connected()?;
        Ok(net)
    }

    fn check_strongly_connected(&self) -> Result<(), NetworkError> {
        let fwd = reach(&self.out_adj, 0);
        let bwd = reach(&self.in_adj, 0);
        match (0..self.nodes.len()).find(|&i| !(fwd[i] && bwd[i])) {
            Some(i) => Err(NetworkError::DisconnectedGraph(self.nodes[i].id)),
            None => Ok(()),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    fn require(&self, id: NodeId) -> Result<usize, NetworkError> {
        self.index_of(id).ok_or(NetworkError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    /// Straight-line distance between two nodes.
    pub fn euclidean_m(&self, a: NodeId, b: NodeId) -> Result<f64, NetworkError> {
        let p = &self.nodes[self.require(a)?];
        let q = &self.nodes[self.require(b)?];
        Ok(libm::hypot(p.x_m - q.x_m, p.y_m - q.y_m))
    }

    /// Node closest to a planar point; ties go to the smallest id.
    pub fn nearest_node(&self, x_m: f64, y_m: f64) -> NodeId {
        let mut best = (f64::INFINITY, self.nodes[0].id);
        for n in &self.nodes {
            let d = libm::hypot(n.x_m - x_m, n.y_m - y_m);
            if d < best.0 {
                best = (d, n.id);
            }
        }
        best.1
    }

    /// Shortest-path distances from every node *to* `target`, indexed by
    /// internal node index.
    pub fn distances_to(&self, target: NodeId) -> Result<Vec<f64>, NetworkError> {
        let t = self.require(target)?;
        Ok(dijkstra(&self.in_adj, &[t], None))
    }

    /// Distance from every node to the closest of `targets`.
    pub fn distances_to_any(&self, targets: &[NodeId]) -> Result<Vec<f64>, NetworkError> {
        let idx = targets.iter().map(|&t| self.require(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(dijkstra(&self.in_adj, &idx, None))
    }

    pub fn network_distance(&self, from: NodeId, to: NodeId) -> Result<f64, NetworkError> {
        let s = self.require(from)?;
        let t = self.require(to)?;
        let dist = dijkstra(&self.in_adj, &[t], Some(s));
        Ok(dist[s])
    }

    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Path, NetworkError> {
        let dist = self.distances_to(to)?;
        self.path_along(from, to, &dist)
    }

    /// Rebuilds the lexicographically smallest shortest path from `from` to
    /// `to`, given `dist_to` as returned by [`distances_to`](Self::distances_to)
    /// for the same target.
    ///
    /// From each node the smallest-id successor lying on some shortest path is
    /// taken. Since every candidate sequence starts at `from`, the greedy
    /// choice yields the lexicographic minimum. `total_length_m` is
    /// bit-identical to `dist_to[from]`.
    pub fn path_along(&self, from: NodeId, to: NodeId, dist_to: &[f64]) -> Result<Path, NetworkError> {
        let s = self.require(from)?;
        let t = self.require(to)?;
        if s == t {
            return Ok(Path::default());
        }
        let mut nodes = vec![self.nodes[s].id];
        let mut lengths = Vec::new();
        let mut u = s;
        while u != t {
            let (v, w) = self.out_adj[u]
                .iter()
                .copied()
                .find(|&(v, w)| w + dist_to[v] == dist_to[u])
                .expect("dist_to must come from distances_to on the same target");
            nodes.push(self.nodes[v].id);
            lengths.push(w);
            u = v;
        }
        Ok(Path { nodes, edge_lengths_m: lengths, total_length_m: dist_to[s] })
    }
}

fn reach(adj: &[Vec<(usize, f64)>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &(v, _) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn dijkstra(adj: &[Vec<(usize, f64)>], sources: &[usize], stop_at: Option<usize>) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut done = vec![false; adj.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: s });
    }
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if Some(u) == stop_at {
            break;
        }
        for &(v, w) in &adj[u] {
            let nd = w + d;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    dist
}

/// Memoized distance fields for a fixed network and station set.
///
/// Fields are keyed by target node and computed on first use. The engine owns
/// one of these per run; it never outlives the network it was filled from.
#[derive(Debug, Clone, Default)]
pub struct DistanceCache {
    to_target: BTreeMap<usize, Vec<f64>>,
    to_station: Option<Vec<f64>>,
    station_nodes: Vec<NodeId>,
}

impl DistanceCache {
    pub fn new(station_nodes: Vec<NodeId>) -> Self {
        Self { to_target: BTreeMap::new(), to_station: None, station_nodes }
    }

    pub fn field_to<'a>(&'a mut self, net: &RoadNetwork, target: NodeId) -> &'a [f64] {
        let t = net.index_of(target).expect("target node validated at load");
        self.to_target
            .entry(t)
            .or_insert_with(|| dijkstra(&net.in_adj, &[t], None))
    }

    pub fn distance_m(&mut self, net: &RoadNetwork, from: NodeId, to: NodeId) -> f64 {
        let s = net.index_of(from).expect("source node validated at load");
        self.field_to(net, to)[s]
    }

    pub fn nearest_station_m(&mut self, net: &RoadNetwork, from: NodeId) -> f64 {
        let s = net.index_of(from).expect("source node validated at load");
        let stations = &self.station_nodes;
        let field = self.to_station.get_or_insert_with(|| {
            let idx: Vec<usize> = stations.iter().filter_map(|&n| net.index_of(n)).collect();
            if idx.is_empty() {
                vec![f64::INFINITY; net.node_count()]
            } else {
                dijkstra(&net.in_adj, &idx, None)
            }
        });
        field[s]
    }

    pub fn path(&mut self, net: &RoadNetwork, from: NodeId, to: NodeId) -> Path {
        let field = self.field_to(net, to);
        net.path_along(from, to, field).expect("nodes validated at load")
    }
}
