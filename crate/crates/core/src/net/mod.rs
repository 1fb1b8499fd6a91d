//! Network data model: topologies, traffic matrices, and their file formats.
//!
//! Topology files are line oriented and whitespace separated, `#` starts a
//! comment:
//!
//! ```text
//! NODES <n>
//! <id> <label>          # n lines, ids dense 0..n-1
//! EDGES <m> <directed|undirected>
//! <edge-id> <src> <dst> <capacity> <weight>
//! ```
//!
//! Undirected entries expand into two directed links (`2k` forward, `2k+1`
//! reverse) with identical capacity and weight. Traffic files list demands:
//!
//! ```text
//! DEMANDS <k>
//! <src> <dst> <rate>    # duplicate pairs accumulate
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

pub mod gen;

pub type NodeId = usize;
pub type LinkId = usize;

/// One direction of a physical link.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLink {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Traffic rate the link can carry, same units as the traffic matrix.
    pub capacity: f64,
    /// OSPF administrative weight, integer >= 1.
    pub weight: u32,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("link {link} references unknown node {node}")]
    UnknownNode { link: LinkId, node: NodeId },
    #[error("link {link} is a self-loop on node {node}")]
    SelfLoop { link: LinkId, node: NodeId },
    #[error("link {link} has non-positive capacity {capacity}")]
    NonPositiveCapacity { link: LinkId, capacity: f64 },
    #[error("link {link} has weight 0 (must be >= 1)")]
    ZeroWeight { link: LinkId },
    #[error("graph is not strongly connected: node {node} not mutually reachable with node 0")]
    NotStronglyConnected { node: NodeId },
}

/// Directed multigraph with per-link capacities and integer weights.
///
/// Immutable after construction; node and link ids are dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    labels: Vec<String>,
    links: Vec<DirectedLink>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
}

impl Topology {
    /// Builds and validates a topology. Links must be passed in id order.
    pub fn new(labels: Vec<String>, mut links: Vec<DirectedLink>) -> Result<Self, TopologyError> {
        let n = labels.len();
        for (i, link) in links.iter_mut().enumerate() {
            link.id = i;
            if link.src >= n {
                return Err(TopologyError::UnknownNode { link: i, node: link.src });
            }
            if link.dst >= n {
                return Err(TopologyError::UnknownNode { link: i, node: link.dst });
            }
            if link.src == link.dst {
                return Err(TopologyError::SelfLoop { link: i, node: link.src });
            }
            if !(link.capacity > 0.0) || !link.capacity.is_finite() {
                return Err(TopologyError::NonPositiveCapacity { link: i, capacity: link.capacity });
            }
            if link.weight == 0 {
                return Err(TopologyError::ZeroWeight { link: i });
            }
        }
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for link in &links {
            out_links[link.src].push(link.id);
            in_links[link.dst].push(link.id);
        }
        let topo = Topology { labels, links, out_links, in_links };
        if let Some(node) = topo.check_strongly_connected() {
            return Err(TopologyError::NotStronglyConnected { node });
        }
        Ok(topo)
    }

    /// Convenience constructor: every entry `(src, dst, capacity, weight)`
    /// becomes a forward/reverse link pair.
    pub fn from_undirected(
        n_nodes: usize,
        edges: &[(NodeId, NodeId, f64, u32)],
    ) -> Result<Self, TopologyError> {
        let labels = (0..n_nodes).map(|i| i.to_string()).collect();
        let mut links = Vec::with_capacity(edges.len() * 2);
        for &(src, dst, capacity, weight) in edges {
            let id = links.len();
            links.push(DirectedLink { id, src, dst, capacity, weight });
            links.push(DirectedLink { id: id + 1, src: dst, dst: src, capacity, weight });
        }
        Self::new(labels, links)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, id: LinkId) -> &DirectedLink {
        &self.links[id]
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    /// Link ids leaving `node`, ascending.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node]
    }

    /// Link ids entering `node`, ascending.
    pub fn in_links(&self, node: NodeId) -> &[LinkId] {
        &self.in_links[node]
    }

    /// Base weight vector as stored in the topology file.
    pub fn weights(&self) -> Vec<u32> {
        self.links.iter().map(|l| l.weight).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    /// The link running opposite to `id`, if one exists (lowest id wins on
    /// parallel links).
    pub fn reverse_link(&self, id: LinkId) -> Option<LinkId> {
        let link = &self.links[id];
        self.out_links[link.dst]
            .iter()
            .copied()
            .find(|&e| self.links[e].dst == link.src)
    }

    /// Returns a node that is not mutually reachable with node 0, or None if
    /// the graph is strongly connected.
    fn check_strongly_connected(&self) -> Option<NodeId> {
        let n = self.n_nodes();
        if n <= 1 {
            return None;
        }
        let forward = self.reachable_from(0, false);
        let backward = self.reachable_from(0, true);
        (0..n).find(|&v| !forward[v] || !backward[v])
    }

    fn reachable_from(&self, start: NodeId, reversed: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            let hops = if reversed { &self.in_links[v] } else { &self.out_links[v] };
            for &e in hops {
                let next = if reversed { self.links[e].src } else { self.links[e].dst };
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }
}

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("demand rate for {src}->{dst} is negative ({rate})")]
    NegativeRate { src: NodeId, dst: NodeId, rate: f64 },
    #[error("node id {node} out of range (matrix has {n} nodes)")]
    OutOfRange { node: NodeId, n: usize },
}

/// Per source/destination demand rates; diagonal fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    n: usize,
    demand: Vec<f64>,
}

impl TrafficMatrix {
    pub fn zeros(n: usize) -> Self {
        TrafficMatrix { n, demand: vec![0.0; n * n] }
    }

    /// Validates a dense row-major matrix: entries >= 0, zero diagonal.
    pub fn from_dense(n: usize, demand: Vec<f64>) -> Result<Self, TrafficError> {
        assert_eq!(demand.len(), n * n, "demand matrix must be n*n");
        for i in 0..n {
            for j in 0..n {
                let rate = demand[i * n + j];
                if i == j && rate != 0.0 {
                    return Err(TrafficError::NegativeRate { src: i, dst: j, rate });
                }
                if rate < 0.0 || !rate.is_finite() {
                    return Err(TrafficError::NegativeRate { src: i, dst: j, rate });
                }
            }
        }
        Ok(TrafficMatrix { n, demand })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn demand(&self, src: NodeId, dst: NodeId) -> f64 {
        self.demand[src * self.n + dst]
    }

    /// Accumulates a demand entry; the diagonal is forced to zero.
    pub fn add_demand(&mut self, src: NodeId, dst: NodeId, rate: f64) -> Result<(), TrafficError> {
        if src >= self.n {
            return Err(TrafficError::OutOfRange { node: src, n: self.n });
        }
        if dst >= self.n {
            return Err(TrafficError::OutOfRange { node: dst, n: self.n });
        }
        if rate < 0.0 || !rate.is_finite() {
            return Err(TrafficError::NegativeRate { src, dst, rate });
        }
        if src != dst {
            self.demand[src * self.n + dst] += rate;
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TrafficMatrix {
            n: self.n,
            demand: self.demand.iter().map(|d| d * factor).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.demand.iter().all(|&d| d == 0.0)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected {expected}")]
    Malformed { line: usize, expected: &'static str },
    #[error("line {line}: unknown node id {node}")]
    UnknownNode { line: usize, node: usize },
    #[error("self-loop at line {line}")]
    SelfLoop { line: usize },
    #[error("line {line}: capacity must be a positive number")]
    BadCapacity { line: usize },
    #[error("line {line}: weight must be an integer >= 1")]
    BadWeight { line: usize },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: usize },
    #[error("line {line}: id {id} out of range (expected 0..{max})")]
    IdOutOfRange { line: usize, id: usize, max: usize },
    #[error("line {line}: negative demand rate")]
    NegativeRate { line: usize },
    #[error("unexpected end of file: expected {expected}")]
    UnexpectedEof { expected: &'static str },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(idx, raw)| {
        let stripped = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = stripped.split_whitespace().collect();
        if tokens.is_empty() {
            None
        } else {
            Some((idx + 1, tokens))
        }
    })
}

fn parse_usize(tok: &str) -> Option<usize> {
    tok.parse().ok()
}

/// Parses a topology file; see the module docs for the format.
pub fn parse_topology(text: &str) -> Result<Topology, ParseError> {
    let mut lines = content_lines(text);

    let (line, header) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "NODES header" })?;
    let n_nodes = match header.as_slice() {
        [kw, n] if kw.eq_ignore_ascii_case("NODES") => {
            parse_usize(n).ok_or(ParseError::Malformed { line, expected: "NODES <count>" })?
        }
        _ => return Err(ParseError::Malformed { line, expected: "NODES <count>" }),
    };

    let mut labels: Vec<Option<String>> = vec![None; n_nodes];
    for _ in 0..n_nodes {
        let (line, tokens) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "node line" })?;
        let (id_tok, label) = match tokens.as_slice() {
            [id] => (*id, None),
            [id, label] => (*id, Some(label.to_string())),
            _ => return Err(ParseError::Malformed { line, expected: "<id> [label]" }),
        };
        let id = parse_usize(id_tok).ok_or(ParseError::Malformed { line, expected: "<id> [label]" })?;
        if id >= n_nodes {
            return Err(ParseError::IdOutOfRange { line, id, max: n_nodes });
        }
        if labels[id].is_some() {
            return Err(ParseError::DuplicateId { line, id });
        }
        labels[id] = Some(label.unwrap_or_else(|| id.to_string()));
    }
    let labels: Vec<String> = labels.into_iter().map(|l| l.unwrap()).collect();

    let (line, header) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "EDGES header" })?;
    let (n_edges, directed) = match header.as_slice() {
        [kw, m, mode] if kw.eq_ignore_ascii_case("EDGES") => {
            let m = parse_usize(m).ok_or(ParseError::Malformed { line, expected: "EDGES <count> <directed|undirected>" })?;
            let directed = match *mode {
                m if m.eq_ignore_ascii_case("directed") => true,
                m if m.eq_ignore_ascii_case("undirected") => false,
                _ => return Err(ParseError::Malformed { line, expected: "EDGES <count> <directed|undirected>" }),
            };
            (m, directed)
        }
        _ => return Err(ParseError::Malformed { line, expected: "EDGES <count> <directed|undirected>" }),
    };

    let n_links = if directed { n_edges } else { n_edges * 2 };
    let mut links: Vec<Option<DirectedLink>> = vec![None; n_links];
    for _ in 0..n_edges {
        let (line, tokens) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "edge line" })?;
        let [id_tok, src_tok, dst_tok, cap_tok, w_tok] = tokens.as_slice() else {
            return Err(ParseError::Malformed { line, expected: "<edge-id> <src> <dst> <capacity> <weight>" });
        };
        let expected = "<edge-id> <src> <dst> <capacity> <weight>";
        let id = parse_usize(id_tok).ok_or(ParseError::Malformed { line, expected })?;
        let src = parse_usize(src_tok).ok_or(ParseError::Malformed { line, expected })?;
        let dst = parse_usize(dst_tok).ok_or(ParseError::Malformed { line, expected })?;
        if id >= n_edges {
            return Err(ParseError::IdOutOfRange { line, id, max: n_edges });
        }
        if src >= n_nodes {
            return Err(ParseError::UnknownNode { line, node: src });
        }
        if dst >= n_nodes {
            return Err(ParseError::UnknownNode { line, node: dst });
        }
        if src == dst {
            return Err(ParseError::SelfLoop { line });
        }
        let capacity: f64 = cap_tok.parse().map_err(|_| ParseError::BadCapacity { line })?;
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(ParseError::BadCapacity { line });
        }
        let weight: u32 = w_tok.parse().map_err(|_| ParseError::BadWeight { line })?;
        if weight < 1 {
            return Err(ParseError::BadWeight { line });
        }
        if directed {
            if links[id].is_some() {
                return Err(ParseError::DuplicateId { line, id });
            }
            links[id] = Some(DirectedLink { id, src, dst, capacity, weight });
        } else {
            if links[2 * id].is_some() {
                return Err(ParseError::DuplicateId { line, id });
            }
            links[2 * id] = Some(DirectedLink { id: 2 * id, src, dst, capacity, weight });
            links[2 * id + 1] = Some(DirectedLink { id: 2 * id + 1, src: dst, dst: src, capacity, weight });
        }
    }
    let links: Vec<DirectedLink> = links.into_iter().map(|l| l.unwrap()).collect();
    Ok(Topology::new(labels, links)?)
}

/// Serializes in directed form; `parse_topology` round-trips it field-exact.
pub fn serialize_topology(topo: &Topology) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NODES {}", topo.n_nodes());
    for v in 0..topo.n_nodes() {
        let _ = writeln!(out, "{} {}", v, topo.label(v));
    }
    let _ = writeln!(out, "EDGES {} directed", topo.n_links());
    for link in topo.links() {
        let _ = writeln!(out, "{} {} {} {} {}", link.id, link.src, link.dst, link.capacity, link.weight);
    }
    out
}

/// Parses a demand list into an `n_nodes` x `n_nodes` matrix.
pub fn parse_traffic(text: &str, n_nodes: usize) -> Result<TrafficMatrix, ParseError> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "DEMANDS header" })?;
    let n_demands = match header.as_slice() {
        [kw, k] if kw.eq_ignore_ascii_case("DEMANDS") => {
            parse_usize(k).ok_or(ParseError::Malformed { line, expected: "DEMANDS <count>" })?
        }
        _ => return Err(ParseError::Malformed { line, expected: "DEMANDS <count>" }),
    };
    let mut tm = TrafficMatrix::zeros(n_nodes);
    for _ in 0..n_demands {
        let (line, tokens) = lines.next().ok_or(ParseError::UnexpectedEof { expected: "demand line" })?;
        let [src_tok, dst_tok, rate_tok] = tokens.as_slice() else {
            return Err(ParseError::Malformed { line, expected: "<src> <dst> <rate>" });
        };
        let expected = "<src> <dst> <rate>";
        let src = parse_usize(src_tok).ok_or(ParseError::Malformed { line, expected })?;
        let dst = parse_usize(dst_tok).ok_or(ParseError::Malformed { line, expected })?;
        let rate: f64 = rate_tok.parse().map_err(|_| ParseError::Malformed { line, expected })?;
        if src >= n_nodes {
            return Err(ParseError::UnknownNode { line, node: src });
        }
        if dst >= n_nodes {
            return Err(ParseError::UnknownNode { line, node: dst });
        }
        if rate < 0.0 || !rate.is_finite() {
            return Err(ParseError::NegativeRate { line });
        }
        tm.add_demand(src, dst, rate).expect("bounds already checked");
    }
    Ok(tm)
}

/// Serializes the nonzero demands; `parse_traffic` round-trips it.
pub fn serialize_traffic(tm: &TrafficMatrix) -> String {
    let n = tm.n_nodes();
    let mut entries = Vec::new();
    for src in 0..n {
        for dst in 0..n {
            let rate = tm.demand(src, dst);
            if rate != 0.0 {
                entries.push((src, dst, rate));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "DEMANDS {}", entries.len());
    for (src, dst, rate) in entries {
        let _ = writeln!(out, "{} {} {}", src, dst, rate);
    }
    out
}
