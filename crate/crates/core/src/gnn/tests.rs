use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::net::Topology;
use crate::nn::{Activation, Layer};

fn pair_topology() -> Topology {
    Topology::from_undirected(2, &[(0, 1, 10.0, 1)]).unwrap()
}

/// 0 connected to 1, 2, 3; all bidirected (hub node 0).
fn star_topology() -> Topology {
    Topology::from_undirected(4, &[(0, 1, 10.0, 1), (0, 2, 10.0, 1), (0, 3, 10.0, 1)]).unwrap()
}

/// Fixed 6-node test instance with a little structure variety.
fn six_node() -> Topology {
    Topology::from_undirected(
        6,
        &[
            (0, 1, 10.0, 2),
            (1, 2, 20.0, 1),
            (2, 3, 10.0, 3),
            (3, 4, 15.0, 1),
            (4, 5, 10.0, 2),
            (5, 0, 20.0, 1),
            (1, 4, 30.0, 4),
        ],
    )
    .unwrap()
}

fn zero_params() -> GnnParams {
    let zeros = |dims: [usize; 3]| Mlp {
        layers: vec![
            Layer { w: Matrix::zeros(dims[1], dims[0]), b: vec![0.0; dims[1]], act: Activation::Relu },
            Layer { w: Matrix::zeros(dims[2], dims[1]), b: vec![0.0; dims[2]], act: Activation::Linear },
        ],
    };
    GnnParams {
        message: zeros([MSG_IN, HIDDEN_WIDTH, HIDDEN_DIM]),
        update: zeros([UPD_IN, HIDDEN_WIDTH, HIDDEN_DIM]),
        readout: zeros([HIDDEN_DIM, HIDDEN_WIDTH, 1]),
    }
}

#[test]
fn init_hidden_layout() {
    let h = init_hidden(1, 0.0);
    assert_eq!(h.len(), HIDDEN_DIM);
    assert_eq!(h[0], 0.1);
    assert!(h[1..].iter().all(|&v| v == 0.0));

    let h = init_hidden(10, 0.5);
    assert_eq!(h[0], 1.0);
    assert_eq!(h[1], 0.5);
    assert!(h[2..].iter().all(|&v| v == 0.0));
}

#[test]
fn neighborhood_is_links_leaving_head_node() {
    let topo = pair_topology();
    assert_eq!(neighborhood(&topo, 0), &[1]); // B(0->1) = {1->0}
    assert_eq!(neighborhood(&topo, 1), &[0]);

    let star = star_topology();
    // Links into node 0 see all three links out of node 0.
    let into_hub = star.in_links(0).to_vec();
    for e in into_hub {
        assert_eq!(neighborhood(&star, e).len(), 3);
    }
}

#[test]
fn neighborhood_nonempty_on_bidirected_graphs() {
    for topo in [pair_topology(), star_topology(), six_node()] {
        for e in 0..topo.n_links() {
            assert!(!neighborhood(&topo, e).is_empty());
        }
    }
}

#[test]
fn zero_parameters_collapse_states() {
    let topo = six_node();
    let mut params = zero_params();
    let weights = topo.weights();
    let utils: Vec<f64> = (0..topo.n_links()).map(|e| 0.1 * e as f64).collect();

    // All-zero parameters: every hidden state ends at exactly zero.
    let h0 = init_hidden_batch(&[(&weights, &utils)], topo.n_links());
    let hk = message_passing(&params, &topo, h0, DEFAULT_MSG_STEPS);
    assert!(hk.data().iter().all(|&v| v == 0.0));

    // With only output biases set, states are a bias-composed constant,
    // identical across links despite different inputs.
    for (c, b) in params.update.layers[1].b.iter_mut().enumerate() {
        *b = 0.01 * (c as f64 + 1.0);
    }
    params.readout.layers[1].b[0] = 0.25;
    let logits = actor_logits(&params, &topo, &weights, &utils);
    assert_eq!(logits.len(), topo.n_links());
    for &l in &logits {
        assert_eq!(l, logits[0]);
    }
    // The critic readout sees the mean of identical states: same constant.
    let v = critic_value(&params, &topo, &weights, &utils);
    assert_eq!(v, logits[0]);
}

#[test]
fn symmetric_links_get_equal_logits() {
    let topo = pair_topology();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = GnnParams::init(&mut rng);
    let logits = actor_logits(&params, &topo, &[2, 2], &[0.3, 0.3]);
    assert_eq!(logits.len(), 2);
    assert!((logits[0] - logits[1]).abs() < 1e-12);
}

fn permute_instance(
    topo: &Topology,
    node_perm: &[usize],
    link_perm: &[usize],
    weights: &[u32],
    utils: &[f64],
) -> (Topology, Vec<u32>, Vec<f64>) {
    let n = topo.n_nodes();
    let labels = (0..n).map(|v| v.to_string()).collect();
    let mut links = vec![None; topo.n_links()];
    let mut w = vec![0u32; topo.n_links()];
    let mut u = vec![0.0; topo.n_links()];
    for e in 0..topo.n_links() {
        let old = topo.link(e);
        let new_id = link_perm[e];
        links[new_id] = Some(crate::net::DirectedLink {
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

#[test]
fn relabeling_permutes_logits_and_preserves_value() {
    let topo = six_node();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = GnnParams::init(&mut rng);
    let weights: Vec<u32> = (0..topo.n_links()).map(|e| 1 + (e as u32 % 4)).collect();
    let utils: Vec<f64> = (0..topo.n_links()).map(|e| 0.05 * (e as f64 + 1.0)).collect();

    let node_perm = [3, 5, 0, 1, 4, 2];
    let link_perm: Vec<usize> = (0..topo.n_links()).map(|e| (e * 5 + 3) % topo.n_links()).collect();
    {
        let mut sorted = link_perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..topo.n_links()).collect::<Vec<_>>(), "valid permutation");
    }

    let (ptopo, pw, pu) = permute_instance(&topo, &node_perm, &link_perm, &weights, &utils);
    let logits = actor_logits(&params, &topo, &weights, &utils);
    let plogits = actor_logits(&params, &ptopo, &pw, &pu);
    for e in 0..topo.n_links() {
        assert!(
            (logits[e] - plogits[link_perm[e]]).abs() < 1e-9,
            "logit {e} not equivariant"
        );
    }
    let v = critic_value(&params, &topo, &weights, &utils);
    let pv = critic_value(&params, &ptopo, &pw, &pu);
    assert!((v - pv).abs() < 1e-9);
    assert!(v.is_finite());
}

#[test]
fn hidden_state_ignores_links_beyond_k_hops() {
    // Bidirected path 0-1-...-11; link 0 is (0->1), link 20 is (10->11).
    let edges: Vec<(usize, usize, f64, u32)> = (0..11).map(|i| (i, i + 1, 10.0, 1)).collect();
    let topo = Topology::from_undirected(12, &edges).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = GnnParams::init(&mut rng);
    let weights = topo.weights();
    let mut utils = vec![0.2; topo.n_links()];

    let h_before = {
        let h0 = init_hidden_batch(&[(&weights, &utils)], topo.n_links());
        message_passing(&params, &topo, h0, DEFAULT_MSG_STEPS)
    };
    utils[20] = 0.9; // far beyond K=4 message-passing hops from link 0
    let h_after = {
        let h0 = init_hidden_batch(&[(&weights, &utils)], topo.n_links());
        message_passing(&params, &topo, h0, DEFAULT_MSG_STEPS)
    };
    for c in 0..HIDDEN_DIM {
        assert_eq!(h_before.get(0, c).to_bits(), h_after.get(0, c).to_bits());
    }
    // Sanity: the perturbed link itself did change.
    assert!(
        (0..HIDDEN_DIM).any(|c| h_before.get(20, c) != h_after.get(20, c)),
        "perturbation had no effect at all"
    );
}

fn param_count(p: &GnnParams) -> usize {
    p.params().iter().map(|s| s.len()).sum()
}

fn get_param(p: &GnnParams, idx: usize) -> f64 {
    let mut i = idx;
    for s in p.params() {
        if i < s.len() {
            return s[i];
        }
        i -= s.len();
    }
    panic!("index out of range");
}

fn set_param(p: &mut GnnParams, idx: usize, v: f64) {
    let mut i = idx;
    for s in p.params_mut() {
        if i < s.len() {
            s[i] = v;
            return;
        }
        i -= s.len();
    }
    panic!("index out of range");
}

fn assert_close_fd(fd: f64, analytic: f64, what: &str) {
    let tol = 1e-4 * fd.abs().max(analytic.abs());
    assert!(
        (fd - analytic).abs() <= tol.max(1e-7),
        "{what}: finite difference {fd} vs analytic {analytic}"
    );
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let topo = star_topology();
    let adj = Adjacency::new(&topo);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut params = GnnParams::init(&mut rng);
    let weights: Vec<u32> = vec![1, 2, 3, 1, 4, 2];
    let utils: Vec<f64> = vec![0.1, 0.7, 0.4, 0.2, 0.9, 0.05];
    let probe: Vec<f64> = (0..topo.n_links()).map(|e| 1.0 - 0.3 * e as f64).collect();

    let loss = |p: &GnnParams| -> f64 {
        let logits = actor_logits_with(p, &adj, &weights, &utils);
        logits.iter().zip(&probe).map(|(l, c)| l * c).sum()
    };

    let h0 = init_hidden_batch(&[(&weights, &utils)], topo.n_links());
    let (_, cache) = actor_forward_batch(&params, &adj, h0, DEFAULT_MSG_STEPS);
    let d_logits = Matrix::from_vec(1, topo.n_links(), probe.clone());
    let grads = actor_backward_batch(&params, &adj, &cache, &d_logits);
    let flat: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let h = 1e-5;
    for idx in 0..param_count(&params) {
        let orig = get_param(&params, idx);
        set_param(&mut params, idx, orig + h);
        let up = loss(&params);
        set_param(&mut params, idx, orig - h);
        let down = loss(&params);
        set_param(&mut params, idx, orig);
        assert_close_fd((up - down) / (2.0 * h), flat[idx], &format!("actor param {idx}"));
    }
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let topo = star_topology();
    let adj = Adjacency::new(&topo);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut params = GnnParams::init(&mut rng);
    let weights: Vec<u32> = vec![3, 1, 2, 2, 1, 4];
    let utils: Vec<f64> = vec![0.5, 0.3, 0.8, 0.1, 0.6, 0.2];

    let h0 = init_hidden_batch(&[(&weights, &utils)], topo.n_links());
    let (_, cache) = critic_forward_batch(&params, &adj, h0, DEFAULT_MSG_STEPS);
    let grads = critic_backward_batch(&params, &adj, &cache, &[1.0]);
    let flat: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let h = 1e-5;
    for idx in 0..param_count(&params) {
        let orig = get_param(&params, idx);
        set_param(&mut params, idx, orig + h);
        let up = critic_value_with(&params, &adj, &weights, &utils);
        set_param(&mut params, idx, orig - h);
        let down = critic_value_with(&params, &adj, &weights, &utils);
        set_param(&mut params, idx, orig);
        assert_close_fd((up - down) / (2.0 * h), flat[idx], &format!("critic param {idx}"));
    }
}

#[test]
fn checkpoint_entries_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = GnnParams::init(&mut rng);
    let entries = params.to_entries("actor.");
    let back = GnnParams::from_entries("actor.", &entries).unwrap();
    assert_eq!(params, back);
}

#[test]
fn checkpoint_shape_mismatch_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = GnnParams::init(&mut rng);
    let mut entries = params.to_entries("actor.");
    entries.retain(|e| e.name != "actor.readout.b1");
    assert!(matches!(
        GnnParams::from_entries("actor.", &entries),
        Err(CheckpointError::MissingTensor(_))
    ));

    let mut entries = params.to_entries("actor.");
    let w0 = entries.iter_mut().find(|e| e.name == "actor.message.w0").unwrap();
    w0.dims = vec![1, w0.data.len()];
    assert!(matches!(
        GnnParams::from_entries("actor.", &entries),
        Err(CheckpointError::ShapeMismatch { .. })
    ));
}

#[test]
fn batched_forward_matches_single_state() {
    let topo = six_node();
    let adj = Adjacency::new(&topo);
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let params = GnnParams::init(&mut rng);
    let w1: Vec<u32> = (0..topo.n_links()).map(|e| 1 + (e as u32) % 3).collect();
    let u1: Vec<f64> = (0..topo.n_links()).map(|e| 0.07 * e as f64).collect();
    let w2: Vec<u32> = (0..topo.n_links()).map(|e| 4 - (e as u32) % 2).collect();
    let u2: Vec<f64> = (0..topo.n_links()).map(|e| 0.5 - 0.02 * e as f64).collect();

    let h0 = init_hidden_batch(&[(&w1, &u1), (&w2, &u2)], topo.n_links());
    let (logits, _) = actor_forward_batch(&params, &adj, h0, DEFAULT_MSG_STEPS);
    let single1 = actor_logits_with(&params, &adj, &w1, &u1);
    let single2 = actor_logits_with(&params, &adj, &w2, &u2);
    for e in 0..topo.n_links() {
        assert_eq!(logits.get(0, e).to_bits(), single1[e].to_bits());
        assert_eq!(logits.get(1, e).to_bits(), single2[e].to_bits());
    }
}
