//! Simulated decentralized execution of a trained policy.
//!
//! One replica runs per link, holding its own copy of the shared actor
//! parameters, its own view of the global weights, and a sampling stream
//! seeded identically everywhere. Replicas exchange hidden states only along
//! topology adjacencies, broadcast their scalar logits, reconstruct the same
//! global softmax locally, and sample the same action set. The simulation is
//! round based with a barrier per message-passing step and per time-step; it
//! verifies after every step that all replicas agree and reports the first
//! divergence otherwise.
//!
//! Agents are modeled as running on their link's source router. A hidden
//! state sent from neighbor i in B(e) to agent e therefore crosses the
//! physical link dst(e) -> src(e), and each logit reaches every other router
//! by flooding along a shortest-hop tree. Byte accounting uses the configured
//! float width plus a 20% header surcharge on every message.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{self, episode_rngs, EpisodeConfig};
use crate::gnn::{self, PolicyParams, DEFAULT_MSG_STEPS, HIDDEN_DIM};
use crate::net::{LinkId, NodeId, Topology, TrafficMatrix};
use crate::nn::{Matrix, Mlp};
use crate::routing;

/// Header/metadata surcharge applied to every message.
pub const HEADER_FACTOR: f64 = 1.2;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("replica {replica} diverged at step {step}: sampled {got:?}, expected {expected:?}")]
    Divergence { step: usize, replica: LinkId, expected: Vec<LinkId>, got: Vec<LinkId> },
}

/// Result of a replica-based episode.
#[derive(Debug, Clone)]
pub struct DistOutcome {
    pub initial_weights: Vec<u32>,
    pub best_weights: Vec<u32>,
    pub best_max_utilization: f64,
    pub final_max_utilization: f64,
    pub actions_per_step: Vec<Vec<LinkId>>,
}

/// Per-link-direction message counters for one episode. Counters are
/// integers; byte figures derive from them by one multiplication, so an
/// incrementally filled ledger equals the closed-form one exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadLedger {
    pub n_links: usize,
    pub t_steps: usize,
    pub k_steps: usize,
    /// Bytes of one hidden-state message (hidden_dim * float_bytes * 1.2).
    pub hidden_msg_bytes: f64,
    /// Bytes of one logit broadcast message (float_bytes * 1.2).
    pub logit_msg_bytes: f64,
    /// Episode message totals per physical link direction.
    pub hidden_msgs: Vec<u64>,
    pub logit_msgs: Vec<u64>,
}

impl OverheadLedger {
    fn empty(topo: &Topology, t_steps: usize, k_steps: usize, hidden_dim: usize, float_bytes: usize) -> Self {
        OverheadLedger {
            n_links: topo.n_links(),
            t_steps,
            k_steps,
            hidden_msg_bytes: (hidden_dim * float_bytes) as f64 * HEADER_FACTOR,
            logit_msg_bytes: float_bytes as f64 * HEADER_FACTOR,
            hidden_msgs: vec![0; topo.n_links()],
            logit_msgs: vec![0; topo.n_links()],
        }
    }

    /// Hidden-state bytes one adjacency direction carries per time-step.
    pub fn per_adjacency_hidden_bytes_per_step(&self) -> f64 {
        self.k_steps as f64 * self.hidden_msg_bytes
    }

    /// Episode hidden-state bytes carried by one link direction.
    pub fn bytes_hidden(&self, link: LinkId) -> f64 {
        self.hidden_msgs[link] as f64 * self.hidden_msg_bytes
    }

    /// Episode logit-broadcast bytes carried by one link direction.
    pub fn bytes_logits(&self, link: LinkId) -> f64 {
        self.logit_msgs[link] as f64 * self.logit_msg_bytes
    }

    pub fn total_bytes(&self) -> f64 {
        let h: u64 = self.hidden_msgs.iter().sum();
        let l: u64 = self.logit_msgs.iter().sum();
        h as f64 * self.hidden_msg_bytes + l as f64 * self.logit_msg_bytes
    }

    /// Mean per-link throughput in MB/s for a given optimization step rate.
    pub fn mean_link_megabytes_per_second(&self, steps_per_second: f64) -> f64 {
        self.total_bytes() / self.n_links as f64 / self.t_steps as f64 * steps_per_second / 1e6
    }

    /// CSV rows per link direction. Stable header:
    /// `link,bytes_hidden,bytes_logits,total_MB,MB_per_s`.
    pub fn to_csv(&self, steps_per_second: f64) -> String {
        let mut out = String::from("link,bytes_hidden,bytes_logits,total_MB,MB_per_s\n");
        for e in 0..self.n_links {
            let total = self.bytes_hidden(e) + self.bytes_logits(e);
            let mb_per_s = total / self.t_steps as f64 * steps_per_second / 1e6;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e,
                self.bytes_hidden(e),
                self.bytes_logits(e),
                total / 1e6,
                mb_per_s
            );
        }
        out
    }
}

/// Shortest-hop flood tree rooted at `root`: the parent link of every other
/// node under BFS in link-id order. A broadcast crosses each tree link once.
fn flood_tree(topo: &Topology, root: NodeId) -> Vec<LinkId> {
    let mut parent: Vec<Option<LinkId>> = vec![None; topo.n_nodes()];
    let mut seen = vec![false; topo.n_nodes()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &e in topo.out_links(v) {
            let next = topo.link(e).dst;
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some(e);
                queue.push_back(next);
            }
        }
    }
    parent.into_iter().flatten().collect()
}

/// The physical link a hidden-state message to agent `e` rides on: the
/// reverse of `e` when it exists, otherwise `e` itself (degenerate
/// non-bidirected case, kept only so accounting stays total).
fn carrying_link(topo: &Topology, e: LinkId) -> LinkId {
    topo.reverse_link(e).unwrap_or(e)
}

/// Closed-form overhead accounting for an episode of `t_steps` steps.
pub fn overhead_report(
    topo: &Topology,
    t_steps: usize,
    k_steps: usize,
    hidden_dim: usize,
    float_bytes: usize,
) -> OverheadLedger {
    let mut ledger = OverheadLedger::empty(topo, t_steps, k_steps, hidden_dim, float_bytes);
    for e in 0..topo.n_links() {
        let fan_in = gnn::neighborhood(topo, e).len() as u64;
        ledger.hidden_msgs[carrying_link(topo, e)] += fan_in * (t_steps * k_steps) as u64;
    }
    for v in 0..topo.n_nodes() {
        let agents_here = topo.out_links(v).len() as u64;
        if agents_here == 0 {
            continue;
        }
        for &l in &flood_tree(topo, v) {
            ledger.logit_msgs[l] += agents_here * t_steps as u64;
        }
    }
    ledger
}

/// One per-link agent: local state view, shared parameters, shared-seed
/// sampling stream.
struct Replica<'a> {
    link: LinkId,
    params: &'a PolicyParams,
    weights: Vec<u32>,
    utilization: Vec<f64>,
    hidden: Vec<f64>,
    sample_rng: ChaCha8Rng,
}

impl<'a> Replica<'a> {
    /// One message round: combine received (sender, hidden) pairs, already
    /// sorted by sender link id, into the next own hidden state.
    fn message_round(&mut self, received: &[(LinkId, &[f64])]) {
        let mut mins = [0.0; HIDDEN_DIM];
        let mut maxs = [0.0; HIDDEN_DIM];
        if !received.is_empty() {
            let mut x = Matrix::zeros(received.len(), 2 * HIDDEN_DIM);
            for (row, (_, h_i)) in received.iter().enumerate() {
                let r = x.row_mut(row);
                r[..HIDDEN_DIM].copy_from_slice(&self.hidden);
                r[HIDDEN_DIM..].copy_from_slice(h_i);
            }
            let msgs = self.params.message.infer(x);
            for c in 0..HIDDEN_DIM {
                mins[c] = msgs.get(0, c);
                maxs[c] = msgs.get(0, c);
            }
            for row in 1..received.len() {
                for c in 0..HIDDEN_DIM {
                    let v = msgs.get(row, c);
                    if v < mins[c] {
                        mins[c] = v;
                    }
                    if v > maxs[c] {
                        maxs[c] = v;
                    }
                }
            }
        }
        let mut x_upd = Matrix::zeros(1, 3 * HIDDEN_DIM);
        {
            let r = x_upd.row_mut(0);
            r[..HIDDEN_DIM].copy_from_slice(&self.hidden);
            r[HIDDEN_DIM..2 * HIDDEN_DIM].copy_from_slice(&mins);
            r[2 * HIDDEN_DIM..].copy_from_slice(&maxs);
        }
        let h_next = self.params.update.infer(x_upd);
        self.hidden.copy_from_slice(h_next.row(0));
    }

    fn logit(&self) -> f64 {
        let x = Matrix::from_vec(1, HIDDEN_DIM, self.hidden.clone());
        self.params.readout.infer(x).get(0, 0)
    }
}

/// Fault-injection handle: replica `replica` samples from its own `seed`
/// instead of the shared one, which must be detected as a divergence.
#[derive(Debug, Clone, Copy)]
pub struct SeedFault {
    pub replica: LinkId,
    pub seed: u64,
}

/// Runs a full episode on per-link replicas and checks replica agreement at
/// every step. Equals the centralized execution bit for bit.
pub fn run_distributed_episode(
    topo: &Topology,
    tm: &TrafficMatrix,
    actor: &PolicyParams,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<(DistOutcome, OverheadLedger), DistError> {
    run_distributed_episode_with_fault(topo, tm, actor, cfg, seed, None)
}

pub fn run_distributed_episode_with_fault(
    topo: &Topology,
    tm: &TrafficMatrix,
    actor: &PolicyParams,
    cfg: &EpisodeConfig,
    seed: u64,
    fault: Option<SeedFault>,
) -> Result<(DistOutcome, OverheadLedger), DistError> {
    let n_links = topo.n_links();
    assert!(cfg.n_actions >= 1 && cfg.n_actions <= n_links);
    let mut ledger = OverheadLedger::empty(topo, cfg.episode_len, DEFAULT_MSG_STEPS, HIDDEN_DIM, 4);
    let flood_trees: Vec<Vec<LinkId>> = (0..topo.n_nodes()).map(|v| flood_tree(topo, v)).collect();

    // Every replica derives the same initial weight vector from the shared
    // seed, exactly like the centralized reset.
    let mut replicas: Vec<Replica> = (0..n_links)
        .map(|link| {
            let (mut init_rng, sample_rng) = episode_rngs(seed);
            let mut env_view = env::Env::new(topo, tm, cfg.clone());
            let state = env_view.reset(&mut init_rng);
            let _ = &mut env_view;
            let sample_rng = match fault {
                Some(f) if f.replica == link => episode_rngs(f.seed).1,
                _ => sample_rng,
            };
            Replica {
                link,
                params: actor,
                weights: state.weights,
                utilization: state.utilization,
                hidden: vec![0.0; HIDDEN_DIM],
                sample_rng,
            }
        })
        .collect();

    let initial_weights = replicas[0].weights.clone();
    let mut best_weights = replicas[0].weights.clone();
    let mut best_util = max_util(topo, &replicas[0].weights, tm);
    let initial_best = best_util;
    let mut actions_per_step = Vec::with_capacity(cfg.episode_len);

    for step in 0..cfg.episode_len {
        // h^0 from each replica's own link features only.
        for r in replicas.iter_mut() {
            let h0 = gnn::init_hidden(r.weights[r.link], r.utilization[r.link]);
            r.hidden.copy_from_slice(&h0);
        }
        // K rounds, barrier-synchronized: snapshot all states, then update.
        for _ in 0..DEFAULT_MSG_STEPS {
            let snapshot: Vec<Vec<f64>> = replicas.iter().map(|r| r.hidden.clone()).collect();
            for e in 0..n_links {
                let senders = gnn::neighborhood(topo, e);
                let received: Vec<(LinkId, &[f64])> =
                    senders.iter().map(|&i| (i, snapshot[i].as_slice())).collect();
                ledger.hidden_msgs[carrying_link(topo, e)] += received.len() as u64;
                replicas[e].message_round(&received);
            }
        }
        // Each agent floods its scalar logit; everyone rebuilds the vector.
        let logits: Vec<f64> = replicas.iter().map(|r| r.logit()).collect();
        for r in replicas.iter() {
            for &l in &flood_trees[topo.link(r.link).src] {
                ledger.logit_msgs[l] += 1;
            }
        }
        // Shared-seed sampling; all replicas must arrive at the same set.
        let mut chosen: Option<Vec<LinkId>> = None;
        for r in replicas.iter_mut() {
            let (actions, _) = env::select_actions(&logits, cfg.n_actions, &mut r.sample_rng);
            match &chosen {
                None => chosen = Some(actions),
                Some(expected) if *expected != actions => {
                    return Err(DistError::Divergence {
                        step,
                        replica: r.link,
                        expected: expected.clone(),
                        got: actions,
                    });
                }
                _ => {}
            }
        }
        let actions = chosen.expect("at least one replica");
        // Apply locally and re-route from the local global view.
        for r in replicas.iter_mut() {
            for &a in &actions {
                r.weights[a] = match cfg.weight_cap {
                    Some(cap) => (r.weights[a] + 1).min(cap),
                    None => r.weights[a] + 1,
                };
            }
            let routed = routing::ecmp_loads_with(topo, &r.weights, tm)
                .expect("topology is strongly connected");
            r.utilization = routed.utilization;
        }
        let u = max_util(topo, &replicas[0].weights, tm);
        if u < best_util {
            best_util = u;
            best_weights = replicas[0].weights.clone();
        }
        actions_per_step.push(actions);
    }
    debug_assert!(best_util <= initial_best);
    let final_util = max_util(topo, &replicas[0].weights, tm);
    Ok((
        DistOutcome {
            initial_weights,
            best_weights,
            best_max_utilization: best_util,
            final_max_utilization: final_util,
            actions_per_step,
        },
        ledger,
    ))
}

fn max_util(topo: &Topology, weights: &[u32], tm: &TrafficMatrix) -> f64 {
    routing::ecmp_loads_with(topo, weights, tm).expect("strongly connected").max_utilization
}

/// Convenience check used by the CLI and the acceptance suite: compares the
/// replica-based episode with the centralized one for a batch of seeds.
pub fn check_equivalence(
    topo: &Topology,
    tm: &TrafficMatrix,
    actor: &PolicyParams,
    cfg: &EpisodeConfig,
    seeds: &[u64],
) -> Result<(), DistError> {
    for &seed in seeds {
        let (dist, _) = run_distributed_episode(topo, tm, actor, cfg, seed)?;
        let central = crate::trainer::run_policy_episode(topo, tm, actor, cfg, seed, false);
        if dist.actions_per_step != central.actions_per_step
            || dist.best_weights != central.best_weights
        {
            let step = dist
                .actions_per_step
                .iter()
                .zip(&central.actions_per_step)
                .position(|(a, b)| a != b)
                .unwrap_or(cfg.episode_len);
            return Err(DistError::Divergence {
                step,
                replica: 0,
                expected: central.actions_per_step.get(step).cloned().unwrap_or_default(),
                got: dist.actions_per_step.get(step).cloned().unwrap_or_default(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::run_policy_episode;
    use rand::SeedableRng;

    fn pair() -> (Topology, TrafficMatrix) {
        let topo = Topology::from_undirected(2, &[(0, 1, 10.0, 1)]).unwrap();
        let mut tm = TrafficMatrix::zeros(2);
        tm.add_demand(0, 1, 5.0).unwrap();
        tm.add_demand(1, 0, 2.0).unwrap();
        (topo, tm)
    }

    fn six_node() -> (Topology, TrafficMatrix) {
        let topo = Topology::from_undirected(
            6,
            &[
                (0, 1, 10.0, 1),
                (1, 2, 20.0, 2),
                (2, 3, 10.0, 1),
                (3, 4, 15.0, 3),
                (4, 5, 10.0, 1),
                (5, 0, 20.0, 2),
                (1, 4, 30.0, 1),
            ],
        )
        .unwrap();
        let tm = crate::net::gen::gen_gravity_tm(&topo, 5, 0.8).unwrap();
        (topo, tm)
    }

    fn actor(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::init(&mut rng)
    }

    #[test]
    fn pair_matches_centralized_for_any_seed() {
        let (topo, tm) = pair();
        let params = actor(3);
        let cfg = EpisodeConfig { episode_len: 4, ..Default::default() };
        for seed in [0u64, 1, 42, 1 << 40] {
            let (dist, _) = run_distributed_episode(&topo, &tm, &params, &cfg, seed).unwrap();
            let central = run_policy_episode(&topo, &tm, &params, &cfg, seed, false);
            assert_eq!(dist.actions_per_step, central.actions_per_step);
            assert_eq!(dist.best_weights, central.best_weights);
            assert_eq!(dist.initial_weights, central.initial_weights);
            assert_eq!(
                dist.best_max_utilization.to_bits(),
                central.best_max_utilization.to_bits()
            );
        }
    }

    #[test]
    fn six_node_matches_centralized_multi_action() {
        let (topo, tm) = six_node();
        let params = actor(8);
        let cfg = EpisodeConfig { episode_len: 6, n_actions: 3, ..Default::default() };
        for seed in 0..5u64 {
            let (dist, _) = run_distributed_episode(&topo, &tm, &params, &cfg, seed).unwrap();
            let central = run_policy_episode(&topo, &tm, &params, &cfg, seed, false);
            assert_eq!(dist.actions_per_step, central.actions_per_step);
            assert_eq!(dist.best_weights, central.best_weights);
        }
    }

    #[test]
    fn tampered_replica_seed_is_detected() {
        let (topo, tm) = six_node();
        let params = actor(8);
        let cfg = EpisodeConfig { episode_len: 4, ..Default::default() };
        let fault = SeedFault { replica: 3, seed: 999_999 };
        let err =
            run_distributed_episode_with_fault(&topo, &tm, &params, &cfg, 7, Some(fault));
        match err {
            Err(DistError::Divergence { replica, .. }) => assert_eq!(replica, 3),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hidden_message_arithmetic() {
        let (topo, _) = pair();
        let ledger = overhead_report(&topo, 10, 4, 16, 4);
        assert_eq!(ledger.hidden_msg_bytes, 76.8);
        assert_eq!(ledger.per_adjacency_hidden_bytes_per_step(), 307.2);
        // Pair topology: each link has exactly one neighbor, so each link
        // direction carries 307.2 bytes per time-step.
        assert_eq!(ledger.hidden_msgs, vec![40, 40]);
        assert!((ledger.bytes_hidden(0) / 10.0 - 307.2).abs() < 1e-9);
        assert!((ledger.bytes_hidden(1) / 10.0 - 307.2).abs() < 1e-9);
    }

    #[test]
    fn run_ledger_matches_closed_form() {
        let (topo, tm) = six_node();
        let params = actor(1);
        let cfg = EpisodeConfig { episode_len: 5, ..Default::default() };
        let (_, ledger) = run_distributed_episode(&topo, &tm, &params, &cfg, 3).unwrap();
        let expected = overhead_report(&topo, 5, DEFAULT_MSG_STEPS, HIDDEN_DIM, 4);
        assert_eq!(ledger, expected);
    }

    #[test]
    fn overhead_scales_linearly_in_k_and_width() {
        let (topo, _) = six_node();
        let base = overhead_report(&topo, 7, 4, 16, 4);
        let double_k = overhead_report(&topo, 7, 8, 16, 4);
        let double_dim = overhead_report(&topo, 7, 4, 32, 4);
        for e in 0..topo.n_links() {
            assert!((double_k.bytes_hidden(e) - 2.0 * base.bytes_hidden(e)).abs() < 1e-9);
            assert!((double_dim.bytes_hidden(e) - 2.0 * base.bytes_hidden(e)).abs() < 1e-9);
            // Logit flooding is untouched by K and hidden width.
            assert_eq!(double_k.bytes_logits(e), base.bytes_logits(e));
        }
    }

    #[test]
    fn doubling_head_degree_doubles_adjacent_hidden_volume() {
        // Star with 2 spokes vs 4 spokes: the hidden-state volume adjacent to
        // a spoke link pointing at the hub doubles with the hub degree.
        let star2 = Topology::from_undirected(3, &[(0, 1, 10.0, 1), (0, 2, 10.0, 1)]).unwrap();
        let star4 = Topology::from_undirected(
            5,
            &[(0, 1, 10.0, 1), (0, 2, 10.0, 1), (0, 3, 10.0, 1), (0, 4, 10.0, 1)],
        )
        .unwrap();
        // Link 1 is (1 -> 0) in both files; its messages ride link 0 (0 -> 1).
        let l2 = overhead_report(&star2, 1, 4, 16, 4);
        let l4 = overhead_report(&star4, 1, 4, 16, 4);
        assert_eq!(l4.hidden_msgs[0], 2 * l2.hidden_msgs[0]);
        assert_eq!(l4.bytes_hidden(0), 2.0 * l2.bytes_hidden(0));
    }

    #[test]
    fn csv_shape_is_stable() {
        let (topo, _) = pair();
        let ledger = overhead_report(&topo, 10, 4, 16, 4);
        let csv = ledger.to_csv(1000.0);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "link,bytes_hidden,bytes_logits,total_MB,MB_per_s");
        assert_eq!(lines.count(), topo.n_links());
    }

    #[test]
    fn check_equivalence_passes_on_fixtures() {
        let (topo, tm) = pair();
        let params = actor(12);
        let cfg = EpisodeConfig { episode_len: 3, ..Default::default() };
        check_equivalence(&topo, &tm, &params, &cfg, &[1, 2, 3]).unwrap();
    }
}
