//! PPO training over the episode environment with the link-agent networks:
//! episode collection, generalized advantage estimation, clipped-surrogate
//! updates, and the seeded outer training loop.

mod ppo;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use ppo::{ppo_update, PpoConfig, PpoStats};

use crate::env::{
    self, best_configuration, default_episode_length, episode_rngs, Env, EnvState, EpisodeConfig,
};
use crate::gnn::{self, Adjacency, CriticParams, PolicyParams};
use crate::net::{LinkId, Topology, TrafficMatrix};
use crate::nn::{AdamParams, AdamState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at iteration {iteration} (actor {actor_loss}, critic {critic_loss})")]
    NonFiniteLoss { iteration: usize, actor_loss: f64, critic_loss: f64 },
    #[error("training needs at least one scenario with at least one traffic matrix")]
    EmptyConfig,
}

/// One decision point: the observed state, the sampled action set, and the
/// quantities PPO needs to replay it.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub weights: Vec<u32>,
    pub utilization: Vec<f64>,
    pub max_utilization: f64,
    pub logits: Vec<f64>,
    pub actions: Vec<LinkId>,
    pub reward: f64,
    /// Behavior joint log-probability of `actions` under `logits`.
    pub logp: f64,
    /// Critic estimate of the observed state.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub final_max_utilization: f64,
    pub best_weights: Vec<u32>,
    pub best_max_utilization: f64,
}

impl Trajectory {
    pub fn initial_max_utilization(&self) -> f64 {
        self.steps[0].max_utilization
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Rolls out one episode under the current policy, recording everything the
/// update needs. Deterministic for a fixed seed.
pub fn collect_episode(
    topo: &Topology,
    tm: &TrafficMatrix,
    actor: &PolicyParams,
    critic: &CriticParams,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Trajectory {
    let adj = Adjacency::new(topo);
    let env = Env::new(topo, tm, cfg.clone());
    let (mut init_rng, mut sample_rng) = episode_rngs(seed);
    let mut state = env.reset(&mut init_rng);
    let mut best = state.clone();
    let mut steps = Vec::with_capacity(cfg.episode_len);
    for _ in 0..cfg.episode_len {
        let logits = gnn::actor_logits_with(actor, &adj, &state.weights, &state.utilization);
        let value = gnn::critic_value_with(critic, &adj, &state.weights, &state.utilization);
        let (actions, logp) = env::select_actions(&logits, cfg.n_actions, &mut sample_rng);
        let (next, reward) = env.step(&state, &actions);
        steps.push(StepRecord {
            weights: state.weights.clone(),
            utilization: state.utilization.clone(),
            max_utilization: state.max_utilization,
            logits,
            actions,
            reward,
            logp,
            value,
        });
        if next.max_utilization < best.max_utilization {
            best = next.clone();
        }
        state = next;
    }
    Trajectory {
        steps,
        final_max_utilization: state.max_utilization,
        best_weights: best.weights,
        best_max_utilization: best.max_utilization,
    }
}

/// Generalized advantage estimation with terminal bootstrap V_T = 0.
///
/// delta_t = r_t + gamma V_{t+1} - V_t, A_t = sum_l (gamma lambda)^l delta_{t+l},
/// return target R_t = A_t + V_t.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let len = rewards.len();
    let mut advantages = vec![0.0; len];
    let mut next_advantage = 0.0;
    let mut next_value = 0.0;
    for t in (0..len).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_advantage = delta + gamma * lambda * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Deterministic greedy selection: the n highest-logit links (ties to the
/// lower link id).
pub fn greedy_actions(logits: &[f64], n: usize) -> Vec<LinkId> {
    let mut order: Vec<LinkId> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).expect("finite logits").then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Summary of one evaluation episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub initial_weights: Vec<u32>,
    pub initial_max_utilization: f64,
    pub final_max_utilization: f64,
    pub best_weights: Vec<u32>,
    pub best_max_utilization: f64,
    pub actions_per_step: Vec<Vec<LinkId>>,
}

/// Runs one inference episode, greedy or seeded-sampled; the seed also fixes
/// the random initial weights.
pub fn run_policy_episode(
    topo: &Topology,
    tm: &TrafficMatrix,
    actor: &PolicyParams,
    cfg: &EpisodeConfig,
    seed: u64,
    greedy: bool,
) -> EpisodeOutcome {
    let adj = Adjacency::new(topo);
    let env = Env::new(topo, tm, cfg.clone());
    let (mut init_rng, mut sample_rng) = episode_rngs(seed);
    let mut state = env.reset(&mut init_rng);
    let initial_weights = state.weights.clone();
    let initial_max_utilization = state.max_utilization;
    let mut visited: Vec<EnvState> = vec![state.clone()];
    let mut actions_per_step = Vec::with_capacity(cfg.episode_len);
    for _ in 0..cfg.episode_len {
        let logits = gnn::actor_logits_with(actor, &adj, &state.weights, &state.utilization);
        let actions = if greedy {
            greedy_actions(&logits, cfg.n_actions)
        } else {
            env::select_actions(&logits, cfg.n_actions, &mut sample_rng).0
        };
        let (next, _) = env.step(&state, &actions);
        actions_per_step.push(actions);
        visited.push(next.clone());
        state = next;
    }
    let best = best_configuration(visited.iter());
    EpisodeOutcome {
        initial_weights,
        initial_max_utilization,
        final_max_utilization: state.max_utilization,
        best_weights: best.weights.clone(),
        best_max_utilization: best.max_utilization,
        actions_per_step,
    }
}

/// One training topology with its pool of traffic matrices.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub tms: Vec<TrafficMatrix>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub scenarios: Vec<Scenario>,
    pub n_actions: usize,
    /// Episode-length factor c in T = ceil(c * E / n).
    pub episode_factor: f64,
    pub init_weight_range: (u32, u32),
    pub weight_cap: Option<u32>,
    pub ppo: PpoConfig,
    pub adam: AdamParams,
    pub iterations: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(scenarios: Vec<Scenario>, iterations: usize, seed: u64) -> Self {
        TrainConfig {
            scenarios,
            n_actions: 1,
            episode_factor: 3.0,
            init_weight_range: (1, 4),
            weight_cap: None,
            ppo: PpoConfig::default(),
            adam: AdamParams::default(),
            iterations,
            seed,
        }
    }
}

/// One CSV row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub best_maxutil: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

pub struct TrainOutcome {
    pub actor: PolicyParams,
    pub critic: CriticParams,
    pub log: Vec<LogRow>,
}

/// Seeded training loop: scenarios round-robin (topologies alternate fastest),
/// one episode and one PPO update per iteration. `on_iteration` fires after
/// each update with the fresh log row and current parameters.
pub fn train(
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&LogRow, &PolicyParams, &CriticParams),
) -> Result<TrainOutcome, TrainError> {
    if cfg.scenarios.is_empty() || cfg.scenarios.iter().any(|s| s.tms.is_empty()) {
        return Err(TrainError::EmptyConfig);
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut actor = PolicyParams::init(&mut master);
    let mut critic = CriticParams::init(&mut master);
    let mut opt_actor = AdamState::new(&actor.tensor_sizes(), cfg.adam);
    let mut opt_critic = AdamState::new(&critic.tensor_sizes(), cfg.adam);
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        let scenario = &cfg.scenarios[iteration % cfg.scenarios.len()];
        let tm_idx = (iteration / cfg.scenarios.len()) % scenario.tms.len();
        let tm = &scenario.tms[tm_idx];
        let episode_cfg = EpisodeConfig {
            episode_len: default_episode_length(
                scenario.topology.n_links(),
                cfg.n_actions,
                cfg.episode_factor,
            ),
            n_actions: cfg.n_actions,
            init_weight_range: cfg.init_weight_range,
            weight_cap: cfg.weight_cap,
        };
        let episode_seed = master.next_u64();
        let update_seed = master.next_u64();
        let traj = collect_episode(&scenario.topology, tm, &actor, &critic, &episode_cfg, episode_seed);
        let mut update_rng = ChaCha8Rng::seed_from_u64(update_seed);
        let stats = ppo_update(
            &scenario.topology,
            &traj,
            &mut actor,
            &mut critic,
            &cfg.ppo,
            &mut opt_actor,
            &mut opt_critic,
            &mut update_rng,
        )
        .map_err(|e| match e {
            TrainError::NonFiniteLoss { actor_loss, critic_loss, .. } => {
                TrainError::NonFiniteLoss { iteration, actor_loss, critic_loss }
            }
            other => other,
        })?;
        let row = LogRow {
            iteration,
            mean_reward: traj.total_reward() / traj.steps.len() as f64,
            best_maxutil: traj.best_max_utilization,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            entropy: stats.entropy,
        };
        on_iteration(&row, &actor, &critic);
        log.push(row);
    }
    Ok(TrainOutcome { actor, critic, log })
}
