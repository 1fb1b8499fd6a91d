//! Reference weight optimizers: inverse-capacity defaults, tabu local search,
//! and brute-force enumeration for tiny instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

use crate::net::{LinkId, Topology, TrafficMatrix};
use crate::routing::{self, RoutingError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("default OSPF routes zero load; improvement is undefined")]
    ZeroDefaultUtilization,
    #[error("{combinations} weight combinations exceed the enumeration cap of {cap}")]
    InstanceTooLarge { combinations: u128, cap: u128 },
    #[error(transparent)]
    Routing(#[from]  RoutingError),
}

/// Default OSPF convention: weights inversely proportional to capacity,
/// w_e = max(1, round(C_max / c_e)).
pub fn default_ospf_weights(topo: &Topology) -> Vec<u32> {
    let c_max = topo.links().iter().map(|l| l.capacity).fold(0.0, f64::max);
    topo.links()
        .iter()
        .map(|l| ((c_max / l.capacity).round() as u32).max(1))
        .collect()
}

/// Tabu local-search settings. The budget is iterations, not wall time.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub w_max: u32,
    pub max_iterations: usize,
    pub tabu_tenure: usize,
    /// Restart from random weights after this many iterations without a new best.
    pub stagnation_limit: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { w_max: 20, max_iterations: 100, tabu_tenure: 7, stagnation_limit: 15, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub weights: Vec<u32>,
    pub max_utilization: f64,
    pub iterations: usize,
    pub evaluations: u64,
}

fn evaluate(topo: &Topology, weights: &[u32], tm: &TrafficMatrix) -> f64 {
    routing::ecmp_loads_with(topo, weights, tm)
        .expect("strongly connected topology")
        .max_utilization
}

/// Tabu-guided steepest descent over single-link weight changes in [1, w_max].
///
/// Starts from Default OSPF weights. Each iteration evaluates every non-tabu
/// single-link reweighting, takes the best one (even if worsening, which is
/// what lets the search leave a local minimum), and marks the undone value
/// tabu for `tabu_tenure` iterations. A tabu move that would beat the best
/// configuration seen so far is always allowed. After `stagnation_limit`
/// iterations without improving the best-ever value the search restarts from
/// random weights. Deterministic for a fixed seed.
pub fn local_search_weights(topo: &Topology, tm: &TrafficMatrix, cfg: &SearchConfig) -> SearchResult {
    let n_links = topo.n_links();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = default_ospf_weights(topo);
    current.iter_mut().for_each(|w| *w = (*w).min(cfg.w_max));
    let mut current_value = evaluate(topo, &current, tm);
    let mut best = current.clone();
    let mut best_value = current_value;
    let mut evaluations = 1u64;
    let mut tabu: HashMap<(LinkId, u32), usize> = HashMap::new();
    let mut stagnation = 0usize;

    for iter in 0..cfg.max_iterations {
        let moves: Vec<(LinkId, u32)> = (0..n_links)
            .flat_map(|e| (1..=cfg.w_max).map(move |w| (e, w)))
            .filter(|&(e, w)| w != current[e])
            .collect();
        let current_ref = &current;
        let mut scored: Vec<(f64, LinkId, u32)> = moves
            .par_iter()
            .map(|&(e, w)| {
                let mut cand = current_ref.clone();
                cand[e] = w;
                (evaluate(topo, &cand, tm), e, w)
            })
            .collect();
        evaluations += scored.len() as u64;
        scored.sort_by(|a, b| a.partial_cmp(b).expect("utilizations are finite"));

        let chosen = scored.iter().find(|&&(value, e, w)| {
            let is_tabu = tabu.get(&(e, w)).is_some_and(|&expiry| iter < expiry);
            !is_tabu || value < best_value
        });
        let Some(&(value, e, w)) = chosen else {
            break; // every move tabu and none aspirates; give up this run
        };
        tabu.insert((e, current[e]), iter + cfg.tabu_tenure);
        current[e] = w;
        current_value = value;

        if current_value < best_value {
            best_value = current_value;
            best = current.clone();
            stagnation = 0;
        } else {
            stagnation += 1;
            if stagnation >= cfg.stagnation_limit {
                for w in current.iter_mut() {
                    *w = rng.random_range(1..=cfg.w_max);
                }
                current_value = evaluate(topo, &current, tm);
                evaluations += 1;
                if current_value < best_value {
                    best_value = current_value;
                    best = current.clone();
                }
                tabu.clear();
                stagnation = 0;
            }
        }
    }
    SearchResult { weights: best, max_utilization: best_value, iterations: cfg.max_iterations, evaluations }
}

const BRUTE_FORCE_CAP: u128 = 10_000_000;

/// Exhaustive enumeration of all weight vectors in [1, w_max]^E.
///
/// Refuses instances over the enumeration cap. Ties resolve to the
/// lexicographically smallest weight vector.
pub fn brute_force_optimum(
    topo: &Topology,
    tm: &TrafficMatrix,
    w_max: u32,
) -> Result<(Vec<u32>, f64), BaselineError> {
    let n_links = topo.n_links();
    let combinations = (w_max as u128)
        .checked_pow(n_links as u32)
        .unwrap_or(u128::MAX);
    if combinations > BRUTE_FORCE_CAP {
        return Err(BaselineError::InstanceTooLarge { combinations, cap: BRUTE_FORCE_CAP });
    }
    let mut weights = vec![1u32; n_links];
    let mut best = weights.clone();
    let mut best_value = evaluate(topo, &weights, tm);
    loop {
        // odometer increment
        let mut pos = n_links;
        for i in (0..n_links).rev() {
            if weights[i] < w_max {
                weights[i] += 1;
                weights[i + 1..].iter_mut().for_each(|w| *w = 1);
                pos = i;
                break;
            }
        }
        if pos == n_links {
            break;
        }
        let value = evaluate(topo, &weights, tm);
        if value < best_value {
            best_value = value;
            best = weights.clone();
        }
    }
    Ok((best, best_value))
}

/// Percentage improvement of `weights` over Default OSPF,
/// 100 * (u_default - u_weights) / u_default.
pub fn improvement_vs_default(
    topo: &Topology,
    tm: &TrafficMatrix,
    weights: &[u32],
) -> Result<f64, BaselineError> {
    let u_default = routing::ecmp_loads_with(topo, &default_ospf_weights(topo), tm)?.max_utilization;
    if u_default == 0.0 {
        return Err(BaselineError::ZeroDefaultUtilization);
    }
    let u = routing::ecmp_loads_with(topo, weights, tm)?.max_utilization;
    Ok(100.0 * (u_default - u) / u_default)
}
