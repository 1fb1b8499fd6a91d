//! Synthetic traffic-matrix generators.
//!
//! Both generators draw a raw demand pattern from a seeded stream and then
//! rescale the whole matrix by a single factor so that Default-OSPF routing
//! hits a requested maximum utilization. That normalization makes improvement
//! percentages comparable across topologies and seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::default_ospf_weights;
use crate::net::{Topology, TrafficMatrix};
use crate::routing::{self, RoutingError};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("target utilization must be > 0 (got {0})")]
    BadTarget(f64),
    #[error("raw matrix routes zero load under Default OSPF; cannot normalize")]
    DegenerateMatrix,
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

fn normalize_to_target(
    topo: &Topology,
    raw: TrafficMatrix,
    target_util: f64,
) -> Result<TrafficMatrix, GenError> {
    if !(target_util > 0.0) {
        return Err(GenError::BadTarget(target_util));
    }
    let weights = default_ospf_weights(topo);
    let u0 = routing::ecmp_loads_with(topo, &weights, &raw)?.max_utilization;
    if u0 == 0.0 {
        return Err(GenError::DegenerateMatrix);
    }
    Ok(raw.scaled(target_util / u0))
}

/// Off-diagonal demands i.i.d. uniform on (0, 1], then rescaled so Default
/// OSPF reaches `target_util`.
pub fn gen_uniform_tm(topo: &Topology, seed: u64, target_util: f64) -> Result<TrafficMatrix, GenError> {
    let n = topo.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tm = TrafficMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let rate = 1.0 - rng.random::<f64>(); // (0, 1]
                tm.add_demand(i, j, rate).expect("in range");
            }
        }
    }
    normalize_to_target(topo, tm, target_util)
}

/// Gravity matrix from an explicit mass vector: demand[i][j] proportional to
/// m_i * m_j for i != j, rescaled to `target_util`.
pub fn gravity_from_masses(
    topo: &Topology,
    masses: &[f64],
    target_util: f64,
) -> Result<TrafficMatrix, GenError> {
    let n = topo.n_nodes();
    assert_eq!(masses.len(), n, "one mass per node");
    let mut tm = TrafficMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                tm.add_demand(i, j, masses[i] * masses[j]).expect("in range");
            }
        }
    }
    normalize_to_target(topo, tm, target_util)
}

/// Gravity-model matrix with node masses drawn i.i.d. from a unit-rate
/// exponential; returns the mass vector alongside the matrix.
pub fn gen_gravity_tm_with_masses(
    topo: &Topology,
    seed: u64,
    target_util: f64,
) -> Result<(TrafficMatrix, Vec<f64>), GenError> {
    let n = topo.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masses: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let tm = gravity_from_masses(topo, &masses, target_util)?;
    Ok((tm, masses))
}

/// Gravity-model matrix; see [`gen_gravity_tm_with_masses`].
pub fn gen_gravity_tm(topo: &Topology, seed: u64, target_util: f64) -> Result<TrafficMatrix, GenError> {
    gen_gravity_tm_with_masses(topo, seed, target_util).map(|(tm, _)| tm)
}
