//! Episode mechanics: weight-increment actions, shared-seed action sampling,
//! utilization-difference rewards, and best-configuration tracking.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::net::{LinkId, Topology, TrafficMatrix};
use crate::routing;

/// Per-episode settings.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    /// Number of optimization steps T.
    pub episode_len: usize,
    /// Simultaneous actions n per step (distinct links).
    pub n_actions: usize,
    /// Initial weights drawn uniformly from this inclusive range.
    pub init_weight_range: (u32, u32),
    /// Optional ceiling on individual link weights (increments saturate).
    pub weight_cap: Option<u32>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig { episode_len: 1, n_actions: 1, init_weight_range: (1, 4), weight_cap: None }
    }
}

/// Snapshot of the optimization state after `t` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub weights: Vec<u32>,
    pub utilization: Vec<f64>,
    pub max_utilization: f64,
    pub t: usize,
}

/// Episode runner bound to one topology and traffic matrix.
pub struct Env<'a> {
    pub topo: &'a Topology,
    pub tm: &'a TrafficMatrix,
    pub cfg: EpisodeConfig,
}

impl<'a> Env<'a> {
    pub fn new(topo: &'a Topology, tm: &'a TrafficMatrix, cfg: EpisodeConfig) -> Self {
        assert!(cfg.episode_len >= 1, "episode length must be >= 1");
        assert!(cfg.n_actions >= 1 && cfg.n_actions <= topo.n_links(), "1 <= n <= E");
        assert!(cfg.init_weight_range.0 >= 1, "weights start at 1");
        assert!(cfg.init_weight_range.0 <= cfg.init_weight_range.1, "valid range");
        Env { topo, tm, cfg }
    }

    /// Draws initial weights i.i.d. from the configured range and routes.
    pub fn reset(&self, rng: &mut impl Rng) -> EnvState {
        let (lo, hi) = self.cfg.init_weight_range;
        let weights: Vec<u32> =
            (0..self.topo.n_links()).map(|_| rng.random_range(lo..=hi)).collect();
        self.state_for(weights, 0)
    }

    /// Applies one unit increment to each selected link, re-routes, and
    /// returns the new state plus the reward u_max(t) - u_max(t+1).
    pub fn step(&self, state: &EnvState, actions: &[LinkId]) -> (EnvState, f64) {
        assert!(state.t < self.cfg.episode_len, "episode already over");
        let mut seen = vec![false; self.topo.n_links()];
        let mut weights = state.weights.clone();
        for &link in actions {
            assert!(!seen[link], "duplicate action on link {link}");
            seen[link] = true;
            weights[link] = match self.cfg.weight_cap {
                Some(cap) => (weights[link] + 1).min(cap),
                None => weights[link] + 1,
            };
        }
        let next = self.state_for(weights, state.t + 1);
        let reward = state.max_utilization - next.max_utilization;
        (next, reward)
    }

    fn state_for(&self, weights: Vec<u32>, t: usize) -> EnvState {
        let routed = routing::ecmp_loads_with(self.topo, &weights, self.tm)
            .expect("topology is strongly connected");
        EnvState {
            weights,
            utilization: routed.utilization,
            max_utilization: routed.max_utilization,
            t,
        }
    }
}

/// Samples `n` distinct links sequentially without replacement from the
/// softmax over `logits`, renormalizing after each draw. Returns the links in
/// draw order and the joint log-probability of that ordered selection.
pub fn select_actions(logits: &[f64], n: usize, rng: &mut impl Rng) -> (Vec<LinkId>, f64) {
    assert!(n <= logits.len(), "cannot sample more links than exist");
    let mut active: Vec<bool> = vec![true; logits.len()];
    let mut picks = Vec::with_capacity(n);
    let mut logp = 0.0;
    for _ in 0..n {
        // Stabilized softmax over the remaining links.
        let m = logits
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (l, &a) in logits.iter().zip(&active) {
            if a {
                total += (l - m).exp();
            }
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = None;
        for (e, (&l, &a)) in logits.iter().zip(&active).enumerate() {
            if !a {
                continue;
            }
            acc += (l - m).exp();
            if u < acc {
                choice = Some(e);
                break;
            }
        }
        // Float edge: u lands on the total after round-off; take the last active.
        let e = choice.unwrap_or_else(|| active.iter().rposition(|&a| a).unwrap());
        logp += logits[e] - m - total.ln();
        active[e] = false;
        picks.push(e);
    }
    (picks, logp)
}

/// Log-probability of an ordered action selection under `logits`, and the
/// per-step entropy (mean entropy of the conditional categorical at each
/// draw). Mirrors the sampling scheme of [`select_actions`].
pub fn action_log_prob(logits: &[f64], actions: &[LinkId]) -> (f64, f64) {
    let mut active: Vec<bool> = vec![true; logits.len()];
    let mut logp = 0.0;
    let mut entropy = 0.0;
    for &pick in actions {
        assert!(active[pick], "duplicate action on link {pick}");
        let m = logits
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 =
            logits.iter().zip(&active).filter(|(_, &a)| a).map(|(&l, _)| (l - m).exp()).sum();
        let log_total = total.ln();
        logp += logits[pick] - m - log_total;
        // H = log Z - E[logit - m] under the conditional softmax.
        let mut mean_logit = 0.0;
        for (&l, &a) in logits.iter().zip(&active) {
            if a {
                mean_logit += (l - m).exp() / total * (l - m);
            }
        }
        entropy += log_total - mean_logit;
        active[pick] = false;
    }
    (logp, entropy / actions.len() as f64)
}

/// Earliest state achieving the minimum max-utilization.
pub fn best_configuration<'a>(states: impl IntoIterator<Item = &'a EnvState>) -> &'a EnvState {
    states
        .into_iter()
        .reduce(|best, s| if s.max_utilization < best.max_utilization { s } else { best })
        .expect("at least one state visited")
}

/// Episode length rule T = ceil(c * E / n).
pub fn default_episode_length(n_links: usize, n_actions: usize, c: f64) -> usize {
    assert!(n_actions >= 1);
    ((c * n_links as f64) / n_actions as f64).ceil().max(1.0) as usize
}

/// Derives the two deterministic streams an episode consumes: one for the
/// initial weight draw, one for action sampling. Sharing this split between
/// the centralized and replica-based executions keeps them bit-identical.
pub fn episode_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(0);
    let mut sample = ChaCha8Rng::seed_from_u64(seed);
    sample.set_stream(1);
    (init, sample)
}
