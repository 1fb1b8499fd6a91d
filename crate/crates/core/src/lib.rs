//! Multi-agent, GNN-driven optimization of OSPF link weights.
//!
//! The crate models an intradomain network as a directed multigraph, routes a
//! traffic matrix with ECMP shortest paths, and searches for integer link
//! weights that minimize the maximum link utilization. The searcher of
//! interest is a set of per-link agents sharing one message-passing neural
//! network, trained with PPO; classical baselines (inverse-capacity weights,
//! tabu local search, brute-force enumeration) live alongside for comparison.

pub mod baselines;
pub mod dist;
pub mod env;
pub mod gnn;
pub mod net;
pub mod nn;
pub mod routing;
pub mod trainer;

pub use net::{DirectedLink, LinkId, NodeId, Topology, TrafficMatrix};
pub use routing::RoutingState;
