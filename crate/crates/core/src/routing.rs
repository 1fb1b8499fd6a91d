//! Destination-based shortest-path routing with ECMP splitting.
//!
//! Forwarding follows OSPF semantics: per destination, every node forwards
//! along the set of outgoing links lying on some minimum-weight path, and
//! traffic splits equally over that set at each node (fractional splitting,
//! no per-flow hashing). All summations run in fixed id order so results are
//! bit-reproducible.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::net::{LinkId, NodeId, Topology, TrafficMatrix};

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("node {node} cannot reach destination {dst}")]
    Unreachable { node: NodeId, dst: NodeId },
}

/// Equal-cost shortest-path structure toward one destination.
#[derive(Debug, Clone)]
pub struct SpDag {
    /// `dist[v]` = minimum total weight of a directed path v -> dst.
    pub dist: Vec<u64>,
    /// `next_hops[v]` = outgoing links of v on some shortest path, ascending id.
    pub next_hops: Vec<Vec<LinkId>>,
}

/// Per-link loads and utilizations for one routed traffic matrix.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub load: Vec<f64>,
    pub utilization: Vec<f64>,
    pub max_utilization: f64,
}

impl RoutingState {
    fn from_loads(topo: &Topology, load: Vec<f64>) -> Self {
        let utilization: Vec<f64> =
            load.iter().zip(topo.links()).map(|(l, link)| l / link.capacity).collect();
        let max_utilization = utilization.iter().copied().fold(0.0, f64::max);
        RoutingState { load, utilization, max_utilization }
    }
}

/// Maximum link utilization; may exceed 1 when the configuration overloads a link.
pub fn max_utilization(state: &RoutingState) -> f64 {
    state.max_utilization
}

/// Dijkstra toward `dst` over reversed links.
///
/// `next_hops[v]` contains exactly the links e=(v,u) with w_e + dist[u] == dist[v].
pub fn shortest_path_dag(topo: &Topology, weights: &[u32], dst: NodeId) -> Result<SpDag, RoutingError> {
    assert_eq!(weights.len(), topo.n_links(), "one weight per link");
    debug_assert!(weights.iter().all(|&w| w >= 1), "weights must be >= 1");
    let n = topo.n_nodes();
    let mut dist = vec![u64::MAX; n];
    dist[dst] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, dst)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &e in topo.in_links(v) {
            let link = topo.link(e);
            let nd = d + weights[e] as u64;
            if nd < dist[link.src] {
                dist[link.src] = nd;
                heap.push(Reverse((nd, link.src)));
            }
        }
    }
    if let Some(node) = (0..n).find(|&v| dist[v] == u64::MAX) {
        return Err(RoutingError::Unreachable { node, dst });
    }
    let mut next_hops = vec![Vec::new(); n];
    for v in 0..n {
        if v == dst {
            continue;
        }
        for &e in topo.out_links(v) {
            let link = topo.link(e);
            if weights[e] as u64 + dist[link.dst] == dist[v] {
                next_hops[v].push(e);
            }
        }
        debug_assert!(!next_hops[v].is_empty());
    }
    Ok(SpDag { dist, next_hops })
}

/// Per-link load contributed by traffic toward a single destination.
///
/// Nodes are processed in decreasing distance (weights >= 1 make distances
/// strictly decrease hop by hop), so each node's full flow, local demand plus
/// transit, is known before it splits.
pub fn destination_loads(
    topo: &Topology,
    weights: &[u32],
    tm: &TrafficMatrix,
    dst: NodeId,
) -> Result<Vec<f64>, RoutingError> {
    let dag = shortest_path_dag(topo, weights, dst)?;
    let n = topo.n_nodes();
    let mut order: Vec<NodeId> = (0..n).filter(|&v| v != dst).collect();
    order.sort_by_key(|&v| (Reverse(dag.dist[v]), v));
    let mut node_flow: Vec<f64> = (0..n).map(|v| tm.demand(v, dst)).collect();
    let mut load = vec![0.0; topo.n_links()];
    for &v in &order {
        let flow = node_flow[v];
        if flow == 0.0 {
            continue;
        }
        let hops = &dag.next_hops[v];
        let share = flow / hops.len() as f64;
        for &e in hops {
            load[e] += share;
            node_flow[topo.link(e).dst] += share;
        }
    }
    Ok(load)
}

/// Routes the whole matrix and accumulates loads over all destinations.
pub fn ecmp_loads_with(
    topo: &Topology,
    weights: &[u32],
    tm: &TrafficMatrix,
) -> Result<RoutingState, RoutingError> {
    assert_eq!(tm.n_nodes(), topo.n_nodes(), "matrix size must match topology");
    let mut load = vec![0.0; topo.n_links()];
    for dst in 0..topo.n_nodes() {
        if (0..topo.n_nodes()).all(|src| tm.demand(src, dst) == 0.0) {
            continue;
        }
        let dst_load = destination_loads(topo, weights, tm, dst)?;
        for (acc, l) in load.iter_mut().zip(&dst_load) {
            *acc += l;
        }
    }
    Ok(RoutingState::from_loads(topo, load))
}

/// Routes with the weights stored in the topology file.
pub fn ecmp_loads(topo: &Topology, tm: &TrafficMatrix) -> Result<RoutingState, RoutingError> {
    ecmp_loads_with(topo, &topo.weights(), tm)
}
