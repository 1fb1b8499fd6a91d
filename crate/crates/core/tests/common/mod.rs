//! Shared helpers for the integration and acceptance suites: seeded random
//! instances and an exhaustive shortest-path oracle that is independent of
//! the crate's Dijkstra/ECMP implementation.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use magnneto::net::{DirectedLink, LinkId, NodeId, Topology, TrafficMatrix};

/// Random strongly connected topology: a random spanning tree plus extra
/// edges, every edge bidirected, capacities from a small menu, weights in
/// [1, max_weight].
pub fn random_topology(rng: &mut ChaCha8Rng, n_nodes: usize, extra_edges: usize, max_weight: u32) -> Topology {
    let caps = [10.0, 20.0, 40.0];
    let mut used: Vec<(NodeId, NodeId)> = Vec::new();
    let mut edges = Vec::new();
    for v in 1..n_nodes {
        let u = rng.random_range(0..v);
        used.push((u, v));
        edges.push((u, v, caps[rng.random_range(0..caps.len())], rng.random_range(1..=max_weight)));
    }
    let mut attempts = 0;
    while edges.len() < n_nodes - 1 + extra_edges && attempts < 100 {
        attempts += 1;
        let a = rng.random_range(0..n_nodes);
        let b = rng.random_range(0..n_nodes);
        let (a, b) = (a.min(b), a.max(b));
        if a == b || used.contains(&(a, b)) {
            continue;
        }
        used.push((a, b));
        edges.push((a, b, caps[rng.random_range(0..caps.len())], rng.random_range(1..=max_weight)));
    }
    Topology::from_undirected(n_nodes, &edges).unwrap()
}

/// Random traffic matrix: each pair loaded with probability `density`,
/// rates uniform in (0, 2].
pub fn random_tm(rng: &mut ChaCha8Rng, n_nodes: usize, density: f64) -> TrafficMatrix {
    let mut tm = TrafficMatrix::zeros(n_nodes);
    for i in 0..n_nodes {
        for j in 0..n_nodes {
            if i != j && rng.random::<f64>() < density {
                tm.add_demand(i, j, 2.0 * (1.0 - rng.random::<f64>())).unwrap();
            }
        }
    }
    tm
}

/// Minimum total weight over all simple paths src -> dst, by exhaustive DFS.
pub fn brute_min_dist(topo: &Topology, weights: &[u32], src: NodeId, dst: NodeId) -> u64 {
    fn dfs(
        topo: &Topology,
        weights: &[u32],
        v: NodeId,
        dst: NodeId,
        visited: &mut Vec<bool>,
        acc: u64,
        best: &mut u64,
    ) {
        if v == dst {
            *best = (*best).min(acc);
            return;
        }
        for &e in topo.out_links(v) {
            let next = topo.link(e).dst;
            if !visited[next] {
                visited[next] = true;
                dfs(topo, weights, next, dst, visited, acc + weights[e] as u64, best);
                visited[next] = false;
            }
        }
    }
    if src == dst {
        return 0;
    }
    let mut best = u64::MAX;
    let mut visited = vec![false; topo.n_nodes()];
    visited[src] = true;
    dfs(topo, weights, src, dst, &mut visited, 0, &mut best);
    best
}

/// Equal-cost next hops of `v` toward `dst`, derived from the exhaustive
/// distances only.
pub fn oracle_next_hops(topo: &Topology, weights: &[u32], v: NodeId, dst: NodeId) -> Vec<LinkId> {
    let dv = brute_min_dist(topo, weights, v, dst);
    topo.out_links(v)
        .iter()
        .copied()
        .filter(|&e| {
            let link = topo.link(e);
            weights[e] as u64 + brute_min_dist(topo, weights, link.dst, dst) == dv
        })
        .collect()
}

/// Per-link load toward one destination by recursive per-node equal
/// splitting over the oracle next-hop sets.
pub fn oracle_destination_loads(
    topo: &Topology,
    weights: &[u32],
    tm: &TrafficMatrix,
    dst: NodeId,
) -> Vec<f64> {
    fn route(
        topo: &Topology,
        weights: &[u32],
        v: NodeId,
        dst: NodeId,
        amount: f64,
        loads: &mut [f64],
    ) {
        if v == dst || amount == 0.0 {
            return;
        }
        let hops = oracle_next_hops(topo, weights, v, dst);
        let share = amount / hops.len() as f64;
        for e in hops {
            loads[e] += share;
            route(topo, weights, topo.link(e).dst, dst, share, loads);
        }
    }
    let mut loads = vec![0.0; topo.n_links()];
    for src in 0..topo.n_nodes() {
        route(topo, weights, src, dst, tm.demand(src, dst), &mut loads);
    }
    loads
}

/// Full oracle load vector: recursive splits accumulated over destinations.
pub fn oracle_loads(topo: &Topology, weights: &[u32], tm: &TrafficMatrix) -> Vec<f64> {
    let mut loads = vec![0.0; topo.n_links()];
    for dst in 0..topo.n_nodes() {
        for (acc, l) in loads.iter_mut().zip(oracle_destination_loads(topo, weights, tm, dst)) {
            *acc += l;
        }
    }
    loads
}

/// Relabels nodes and links by the given permutations; weights/utilization
/// vectors indexed by link id are permuted alongside.
pub fn permute_instance(
    topo: &Topology,
    node_perm: &[usize],
    link_perm: &[usize],
    weights: &[u32],
    utils: &[f64],
) -> (Topology, Vec<u32>, Vec<f64>) {
    let n = topo.n_nodes();
    let labels = (0..n).map(|v| v.to_string()).collect();
    let mut links: Vec<Option<DirectedLink>> = vec![None; topo.n_links()];
    let mut w = vec![0u32; topo.n_links()];
    let mut u = vec![0.0; topo.n_links()];
    for e in 0..topo.n_links() {
        let old = topo.link(e);
        let new_id = link_perm[e];
        links[new_id] = Some(DirectedLink {
            id: new_id,
            src: node_perm[old.src],
            dst: node_perm[old.dst],
            capacity: old.capacity,
            weight: old.weight,
        });
        w[new_id] = weights[e];
        u[new_id] = utils[e];
    }
    let links = links.into_iter().map(Option::unwrap).collect();
    (Topology::new(labels, links).unwrap(), w, u)
}

/// Seeded random permutation of 0..n.
pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_topology(name: &str) -> Topology {
    let text = std::fs::read_to_string(data_path(name)).expect("fixture file");
    magnneto::net::parse_topology(&text).expect("valid fixture")
}
