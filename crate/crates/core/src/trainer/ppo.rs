//! Clipped-surrogate PPO update over a collected trajectory.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{TrainError, Trajectory};
use crate::gnn::{
    self, Adjacency, CriticParams, GnnGrads, PolicyParams,
};
use crate::net::{LinkId, Topology};
use crate::nn::{AdamState, Matrix};

/// PPO hyperparameters. Defaults: gamma 0.97, lambda 0.9, clip 0.2, 3 epochs
/// of 25-timestep minibatches, critic coefficient 0.5, entropy coefficient
/// 0.001, advantages normalized per update.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.97,
            lambda: 0.9,
            clip: 0.2,
            epochs: 3,
            minibatch: 25,
            value_coef: 0.5,
            entropy_coef: 0.001,
            normalize_advantages: true,
        }
    }
}

/// Loss diagnostics averaged over all minibatch updates of one call.
#[derive(Debug, Clone, Copy)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

/// Joint log-probability and mean conditional entropy of an ordered
/// without-replacement selection, together with their gradients in the
/// logits. Probabilities renormalize over the remaining links after each
/// draw, matching `env::select_actions`.
pub(crate) fn action_logprob_entropy_grads(
    logits: &[f64],
    actions: &[LinkId],
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let n_links = logits.len();
    let mut active = vec![true; n_links];
    let mut logp = 0.0;
    let mut entropy_sum = 0.0;
    let mut d_logp = vec![0.0; n_links];
    let mut d_entropy = vec![0.0; n_links];
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
        d_logp[pick] += 1.0;

        // Conditional entropy H = log Z - E[l - m].
        let mut h = log_total;
        for (e, (&l, &a)) in logits.iter().zip(&active).enumerate() {
            if !a {
                continue;
            }
            let p = (l - m).exp() / total;
            d_logp[e] -= p;
            h -= p * (l - m);
        }
        entropy_sum += h;
        // dH/dz_e = -p_e (log p_e + H) over the active set.
        for (e, (&l, &a)) in logits.iter().zip(&active).enumerate() {
            if !a {
                continue;
            }
            let p = (l - m).exp() / total;
            let log_p = l - m - log_total;
            d_entropy[e] -= p * (log_p + h);
        }
        active[pick] = false;
    }
    let n = actions.len() as f64;
    for g in &mut d_entropy {
        *g /= n;
    }
    (logp, entropy_sum / n, d_logp, d_entropy)
}

pub(crate) struct MinibatchResult {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub actor_grads: GnnGrads,
    pub critic_grads: GnnGrads,
}

/// Loss and gradients for one minibatch of timesteps.
///
/// Total loss = -mean(min(rho A, clip(rho) A))
///              + value_coef * mean((V - R)^2)
///              - entropy_coef * mean(H).
pub(crate) fn minibatch_loss_and_grads(
    adj: &Adjacency,
    traj: &Trajectory,
    batch: &[usize],
    advantages: &[f64],
    returns: &[f64],
    actor: &PolicyParams,
    critic: &CriticParams,
    cfg: &PpoConfig,
) -> MinibatchResult {
    let n_links = adj.n_links();
    let b = batch.len();
    let scale = 1.0 / b as f64;
    let states: Vec<(&[u32], &[f64])> = batch
        .iter()
        .map(|&t| (traj.steps[t].weights.as_slice(), traj.steps[t].utilization.as_slice()))
        .collect();
    let h0 = gnn::init_hidden_batch(&states, n_links);
    let (logits, actor_cache) =
        gnn::actor_forward_batch(actor, adj, h0.clone(), gnn::DEFAULT_MSG_STEPS);
    let (values, critic_cache) = gnn::critic_forward_batch(critic, adj, h0, gnn::DEFAULT_MSG_STEPS);

    let mut actor_loss = 0.0;
    let mut critic_loss = 0.0;
    let mut entropy_total = 0.0;
    let mut ratio_total = 0.0;
    let mut d_logits = Matrix::zeros(b, n_links);
    let mut d_values = vec![0.0; b];
    for (row, &t) in batch.iter().enumerate() {
        let step = &traj.steps[t];
        let adv = advantages[t];
        let (logp, entropy, d_logp, d_entropy) =
            action_logprob_entropy_grads(logits.row(row), &step.actions);
        let ratio = (logp - step.logp).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        actor_loss -= scale * unclipped.min(clipped);
        // d(min)/d(rho): adv on the unclipped branch, 0 once clipping binds.
        let d_surr_d_rho = if unclipped <= clipped { adv } else { 0.0 };
        let d_loss_d_logp = -scale * d_surr_d_rho * ratio;

        critic_loss += scale * (values[row] - returns[t]).powi(2);
        d_values[row] = cfg.value_coef * scale * 2.0 * (values[row] - returns[t]);

        entropy_total += scale * entropy;
        ratio_total += scale * ratio;
        let out = d_logits.row_mut(row);
        for e in 0..n_links {
            out[e] = d_loss_d_logp * d_logp[e] - cfg.entropy_coef * scale * d_entropy[e];
        }
    }
    let actor_grads = gnn::actor_backward_batch(actor, adj, &actor_cache, &d_logits);
    let critic_grads = gnn::critic_backward_batch(critic, adj, &critic_cache, &d_values);
    MinibatchResult {
        actor_loss,
        critic_loss: cfg.value_coef * critic_loss,
        entropy: entropy_total,
        mean_ratio: ratio_total,
        actor_grads,
        critic_grads,
    }
}

pub(crate) fn normalized_advantages(traj: &Trajectory, cfg: &PpoConfig) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
    let (mut advantages, returns) = super::gae(&rewards, &values, cfg.gamma, cfg.lambda);
    if cfg.normalize_advantages {
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }
    }
    (advantages, returns)
}

/// Runs `epochs` passes of shuffled minibatch updates over the trajectory,
/// one Adam step per minibatch for actor and critic.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    topo: &Topology,
    traj: &Trajectory,
    actor: &mut PolicyParams,
    critic: &mut CriticParams,
    cfg: &PpoConfig,
    opt_actor: &mut AdamState,
    opt_critic: &mut AdamState,
    rng: &mut impl Rng,
) -> Result<PpoStats, TrainError> {
    assert!(!traj.steps.is_empty(), "trajectory must contain at least one step");
    let adj = Adjacency::new(topo);
    let (advantages, returns) = normalized_advantages(traj, cfg);

    let mut stats = PpoStats { actor_loss: 0.0, critic_loss: 0.0, entropy: 0.0, mean_ratio: 0.0 };
    let mut updates = 0usize;
    let mut indices: Vec<usize> = (0..traj.steps.len()).collect();
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for batch in indices.chunks(cfg.minibatch) {
            let result = minibatch_loss_and_grads(
                &adj, traj, batch, &advantages, &returns, actor, critic, cfg,
            );
            if !result.actor_loss.is_finite() || !result.critic_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    iteration: 0,
                    actor_loss: result.actor_loss,
                    critic_loss: result.critic_loss,
                });
            }
            opt_actor.step(&mut actor.params_mut(), &result.actor_grads.slices());
            opt_critic.step(&mut critic.params_mut(), &result.critic_grads.slices());
            stats.actor_loss += result.actor_loss;
            stats.critic_loss += result.critic_loss;
            stats.entropy += result.entropy;
            stats.mean_ratio += result.mean_ratio;
            updates += 1;
        }
    }
    let k = updates as f64;
    stats.actor_loss /= k;
    stats.critic_loss /= k;
    stats.entropy /= k;
    stats.mean_ratio /= k;
    Ok(stats)
}
