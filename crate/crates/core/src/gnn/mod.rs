//! Link-agent message-passing networks.
//!
//! Every link carries a 16-dimensional hidden state seeded from its weight
//! and utilization. For K rounds, each link exchanges states with its
//! neighborhood B(e) (the links that leave e's head node), combines the
//! message outputs with element-wise min and max, and updates its state. The
//! actor reads one logit out of each final link state; the critic reads one
//! value out of the mean of all of them. A single parameter set is shared by
//! every link, so the same modules can be replicated at each agent.
//!
//! Forward passes record caches, and the backward passes return exact
//! reverse-mode gradients for the shared parameters. All aggregation runs in
//! fixed link-id order, which makes results bit-reproducible.

mod trunk;

use rand::Rng;

use crate::net::{LinkId, Topology};
use crate::nn::{
    Activation, CheckpointError, Matrix, Mlp, MlpCache, MlpGrads, TensorEntry,
};
pub(crate) use trunk::TrunkCache;

/// Hidden-state width of every link.
pub const HIDDEN_DIM: usize = 16;
/// Message-passing rounds per forward propagation.
pub const DEFAULT_MSG_STEPS: usize = 4;
/// Hidden-layer width of the message/update/readout perceptrons.
pub const HIDDEN_WIDTH: usize = 32;
/// Link weights enter the features scaled by this factor to stay O(1).
pub const WEIGHT_FEATURE_SCALE: f64 = 0.1;

pub(crate) const MSG_IN: usize = 2 * HIDDEN_DIM;
pub(crate) const AGG_DIM: usize = 2 * HIDDEN_DIM;
pub(crate) const UPD_IN: usize = HIDDEN_DIM + AGG_DIM;

/// The three shared MLP modules of one link-based MPNN.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    /// (h_e, h_i) -> message, 32 -> 16.
    pub message: Mlp,
    /// (h_e, min, max) -> next h_e, 48 -> 16.
    pub update: Mlp,
    /// Final hidden state (actor) or mean state (critic) -> scalar, 16 -> 1.
    pub readout: Mlp,
}

/// Actor parameters: per-link readout produces logits.
pub type PolicyParams = GnnParams;
/// Critic parameters: readout of the mean state produces the value estimate.
pub type CriticParams = GnnParams;

/// Gradients mirroring [`GnnParams`].
#[derive(Debug, Clone)]
pub struct GnnGrads {
    pub message: MlpGrads,
    pub update: MlpGrads,
    pub readout: MlpGrads,
}

impl GnnParams {
    pub fn init(rng: &mut impl Rng) -> Self {
        GnnParams {
            message: Mlp::standard(MSG_IN, HIDDEN_WIDTH, HIDDEN_DIM, rng),
            update: Mlp::standard(UPD_IN, HIDDEN_WIDTH, HIDDEN_DIM, rng),
            readout: Mlp::standard(HIDDEN_DIM, HIDDEN_WIDTH, 1, rng),
        }
    }

    fn modules(&self) -> [(&'static str, &Mlp); 3] {
        [("message", &self.message), ("update", &self.update), ("readout", &self.readout)]
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.modules().iter().flat_map(|(_, m)| m.params().into_iter().map(|p| p.len())).collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        out.extend(self.message.params());
        out.extend(self.update.params());
        out.extend(self.readout.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        out.extend(self.message.params_mut());
        out.extend(self.update.params_mut());
        out.extend(self.readout.params_mut());
        out
    }

    /// Checkpoint entries named `<prefix><module>.{w,b}<layer>`.
    pub fn to_entries(&self, prefix: &str) -> Vec<TensorEntry> {
        let mut entries = Vec::new();
        for (module, net) in self.modules() {
            for (l, layer) in net.layers.iter().enumerate() {
                entries.push(TensorEntry::new(
                    format!("{prefix}{module}.w{l}"),
                    vec![layer.w.rows(), layer.w.cols()],
                    layer.w.data().to_vec(),
                ));
                entries.push(TensorEntry::new(
                    format!("{prefix}{module}.b{l}"),
                    vec![layer.b.len()],
                    layer.b.clone(),
                ));
            }
        }
        entries
    }

    /// Rebuilds parameters from checkpoint entries, validating every shape.
    pub fn from_entries(prefix: &str, entries: &[TensorEntry]) -> Result<Self, CheckpointError> {
        let dims = [
            ("message", [MSG_IN, HIDDEN_WIDTH, HIDDEN_DIM]),
            ("update", [UPD_IN, HIDDEN_WIDTH, HIDDEN_DIM]),
            ("readout", [HIDDEN_DIM, HIDDEN_WIDTH, 1]),
        ];
        let find = |name: &str| -> Result<&TensorEntry, CheckpointError> {
            entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
        };
        let mut nets = Vec::new();
        for (module, chain) in dims {
            let mut layers = Vec::new();
            for l in 0..2 {
                let (fan_in, fan_out) = (chain[l], chain[l + 1]);
                let w = find(&format!("{prefix}{module}.w{l}"))?;
                if w.dims != [fan_out, fan_in] {
                    return Err(CheckpointError::ShapeMismatch {
                        name: w.name.clone(),
                        expected: vec![fan_out, fan_in],
                        got: w.dims.clone(),
                    });
                }
                let b = find(&format!("{prefix}{module}.b{l}"))?;
                if b.dims != [fan_out] {
                    return Err(CheckpointError::ShapeMismatch {
                        name: b.name.clone(),
                        expected: vec![fan_out],
                        got: b.dims.clone(),
                    });
                }
                let act = if l == 0 { Activation::Relu } else { Activation::Linear };
                layers.push(crate::nn::Layer {
                    w: Matrix::from_vec(fan_out, fan_in, w.data.clone()),
                    b: b.data.clone(),
                    act,
                });
            }
            nets.push(Mlp { layers });
        }
        let readout = nets.pop().unwrap();
        let update = nets.pop().unwrap();
        let message = nets.pop().unwrap();
        Ok(GnnParams { message, update, readout })
    }
}

impl GnnGrads {
    pub fn zeros_like(params: &GnnParams) -> Self {
        GnnGrads {
            message: MlpGrads::zeros_like(&params.message),
            update: MlpGrads::zeros_like(&params.update),
            readout: MlpGrads::zeros_like(&params.readout),
        }
    }

    pub fn add_assign(&mut self, other: &GnnGrads) {
        self.message.add_assign(&other.message);
        self.update.add_assign(&other.update);
        self.readout.add_assign(&other.readout);
    }

    pub fn scale(&mut self, factor: f64) {
        self.message.scale(factor);
        self.update.scale(factor);
        self.readout.scale(factor);
    }

    /// Gradient tensors in the same order as `GnnParams::params`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        out.extend(self.message.slices());
        out.extend(self.update.slices());
        out.extend(self.readout.slices());
        out
    }
}

/// Neighborhood B(e): the links whose source node is e's destination node.
pub fn neighborhood<'a>(topo: &'a Topology, link: LinkId) -> &'a [LinkId] {
    topo.out_links(topo.link(link).dst)
}

/// Receiver/sender pair list in CSR form, grouped by receiver link id.
#[derive(Debug, Clone)]
pub struct Adjacency {
    n_links: usize,
    pairs: Vec<(u32, u32)>,
    offsets: Vec<usize>,
}

impl Adjacency {
    pub fn new(topo: &Topology) -> Self {
        let n_links = topo.n_links();
        let mut pairs = Vec::new();
        let mut offsets = Vec::with_capacity(n_links + 1);
        offsets.push(0);
        for e in 0..n_links {
            for &i in neighborhood(topo, e) {
                pairs.push((e as u32, i as u32));
            }
            offsets.push(pairs.len());
        }
        Adjacency { n_links, pairs, offsets }
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub(crate) fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub(crate) fn group(&self, e: usize) -> std::ops::Range<usize> {
        self.offsets[e]..self.offsets[e + 1]
    }
}

/// Initial hidden state: (scaled weight, utilization, zero padding).
pub fn init_hidden(weight: u32, utilization: f64) -> [f64; HIDDEN_DIM] {
    let mut h = [0.0; HIDDEN_DIM];
    h[0] = weight as f64 * WEIGHT_FEATURE_SCALE;
    h[1] = utilization;
    h
}

/// Stacks initial hidden states for a batch of link-state snapshots; row
/// `s * n_links + e` holds state s's link e.
pub fn init_hidden_batch(states: &[(&[u32], &[f64])], n_links: usize) -> Matrix {
    let mut h0 = Matrix::zeros(states.len() * n_links, HIDDEN_DIM);
    for (s, (weights, utils)) in states.iter().enumerate() {
        assert_eq!(weights.len(), n_links);
        assert_eq!(utils.len(), n_links);
        for e in 0..n_links {
            h0.row_mut(s * n_links + e).copy_from_slice(&init_hidden(weights[e], utils[e]));
        }
    }
    h0
}

/// Runs K synchronous message-passing rounds and returns the final hidden
/// states (rows = links, in id order).
pub fn message_passing(params: &GnnParams, topo: &Topology, h0: Matrix, steps: usize) -> Matrix {
    let adj = Adjacency::new(topo);
    trunk::forward(&params.message, &params.update, &adj, h0, steps, 1).0
}

pub struct ActorCache {
    trunk: TrunkCache,
    readout: MlpCache,
    n_states: usize,
}

pub struct CriticCache {
    trunk: TrunkCache,
    readout: MlpCache,
    n_states: usize,
}

/// Batched actor propagation: returns a logits matrix (rows = states,
/// columns = links) plus the cache for the backward pass.
pub fn actor_forward_batch(
    params: &PolicyParams,
    adj: &Adjacency,
    h0: Matrix,
    steps: usize,
) -> (Matrix, ActorCache) {
    let n_links = adj.n_links();
    assert_eq!(h0.rows() % n_links, 0);
    let n_states = h0.rows() / n_links;
    let (hk, trunk) = trunk::forward(&params.message, &params.update, adj, h0, steps, n_states);
    let (out, readout) = params.readout.forward(hk);
    let mut logits = Matrix::zeros(n_states, n_links);
    for s in 0..n_states {
        for e in 0..n_links {
            logits.set(s, e, out.get(s * n_links + e, 0));
        }
    }
    (logits, ActorCache { trunk, readout, n_states })
}

/// Gradients of any scalar function of the logits, given d(scalar)/d(logits).
pub fn actor_backward_batch(
    params: &PolicyParams,
    adj: &Adjacency,
    cache: &ActorCache,
    d_logits: &Matrix,
) -> GnnGrads {
    let n_links = adj.n_links();
    assert_eq!(d_logits.rows(), cache.n_states);
    assert_eq!(d_logits.cols(), n_links);
    let mut d_out = Matrix::zeros(cache.n_states * n_links, 1);
    for s in 0..cache.n_states {
        for e in 0..n_links {
            d_out.set(s * n_links + e, 0, d_logits.get(s, e));
        }
    }
    let (readout_grads, d_hk) = params.readout.backward(&cache.readout, &d_out);
    let (message, update) =
        trunk::backward(&params.message, &params.update, adj, &cache.trunk, d_hk);
    GnnGrads { message, update, readout: readout_grads }
}

/// Batched critic propagation: one value estimate per state.
pub fn critic_forward_batch(
    params: &CriticParams,
    adj: &Adjacency,
    h0: Matrix,
    steps: usize,
) -> (Vec<f64>, CriticCache) {
    let n_links = adj.n_links();
    assert_eq!(h0.rows() % n_links, 0);
    let n_states = h0.rows() / n_links;
    let (hk, trunk) = trunk::forward(&params.message, &params.update, adj, h0, steps, n_states);
    // Centralized readout input: mean of final link states, fixed id order.
    let mut mean = Matrix::zeros(n_states, HIDDEN_DIM);
    for s in 0..n_states {
        let row = mean.row_mut(s);
        for e in 0..n_links {
            for (acc, v) in row.iter_mut().zip(hk.row(s * n_links + e)) {
                *acc += v;
            }
        }
        for v in row.iter_mut() {
            *v /= n_links as f64;
        }
    }
    let (out, readout) = params.readout.forward(mean);
    let values = (0..n_states).map(|s| out.get(s, 0)).collect();
    (values, CriticCache { trunk, readout, n_states })
}

/// Gradients of any scalar function of the values, given d(scalar)/d(value).
pub fn critic_backward_batch(
    params: &CriticParams,
    adj: &Adjacency,
    cache: &CriticCache,
    d_values: &[f64],
) -> GnnGrads {
    let n_links = adj.n_links();
    assert_eq!(d_values.len(), cache.n_states);
    let mut d_out = Matrix::zeros(cache.n_states, 1);
    for (s, &dv) in d_values.iter().enumerate() {
        d_out.set(s, 0, dv);
    }
    let (readout_grads, d_mean) = params.readout.backward(&cache.readout, &d_out);
    let mut d_hk = Matrix::zeros(cache.n_states * n_links, HIDDEN_DIM);
    for s in 0..cache.n_states {
        for e in 0..n_links {
            let row = d_hk.row_mut(s * n_links + e);
            for (d, dm) in row.iter_mut().zip(d_mean.row(s)) {
                *d = dm / n_links as f64;
            }
        }
    }
    let (message, update) =
        trunk::backward(&params.message, &params.update, adj, &cache.trunk, d_hk);
    GnnGrads { message, update, readout: readout_grads }
}

/// Per-link logits for one configuration; the global policy is the softmax
/// over these.
pub fn actor_logits(
    params: &PolicyParams,
    topo: &Topology,
    weights: &[u32],
    utilization: &[f64],
) -> Vec<f64> {
    let adj = Adjacency::new(topo);
    actor_logits_with(params, &adj, weights, utilization)
}

pub fn actor_logits_with(
    params: &PolicyParams,
    adj: &Adjacency,
    weights: &[u32],
    utilization: &[f64],
) -> Vec<f64> {
    let h0 = init_hidden_batch(&[(weights, utilization)], adj.n_links());
    let (logits, _) = actor_forward_batch(params, adj, h0, DEFAULT_MSG_STEPS);
    logits.row(0).to_vec()
}

/// Scalar value estimate for one configuration.
pub fn critic_value(
    params: &CriticParams,
    topo: &Topology,
    weights: &[u32],
    utilization: &[f64],
) -> f64 {
    let adj = Adjacency::new(topo);
    critic_value_with(params, &adj, weights, utilization)
}

pub fn critic_value_with(
    params: &CriticParams,
    adj: &Adjacency,
    weights: &[u32],
    utilization: &[f64],
) -> f64 {
    let h0 = init_hidden_batch(&[(weights, utilization)], adj.n_links());
    let (values, _) = critic_forward_batch(params, adj, h0, DEFAULT_MSG_STEPS);
    values[0]
}

#[cfg(test)]
mod tests;
