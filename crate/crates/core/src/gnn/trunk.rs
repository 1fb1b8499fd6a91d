//! Shared message-passing trunk: K rounds of message/aggregate/update over a
//! batch of link-state snapshots, with the caches needed for backprop.

use super::{Adjacency, AGG_DIM, HIDDEN_DIM, MSG_IN, UPD_IN};
use crate::nn::{Matrix, Mlp, MlpCache, MlpGrads};

const NO_PAIR: u32 = u32::MAX;

/// Per-round caches. `argmin`/`argmax` store, for every (state, link,
/// hidden coordinate), the pair row that won the element-wise min/max, so the
/// backward pass can route gradients to it.
pub(crate) struct TrunkCache {
    steps: Vec<StepCache>,
}

struct StepCache {
    msg: MlpCache,
    upd: MlpCache,
    argmin: Vec<u32>,
    argmax: Vec<u32>,
}

/// Rows of `h0` are laid out state-major: row `s * n_links + e`.
pub(crate) fn forward(
    message: &Mlp,
    update: &Mlp,
    adj: &Adjacency,
    h0: Matrix,
    k_steps: usize,
    n_states: usize,
) -> (Matrix, TrunkCache) {
    assert!(k_steps >= 1, "at least one message-passing round");
    let n_links = adj.n_links();
    let n_pairs = adj.n_pairs();
    assert_eq!(h0.rows(), n_states * n_links);
    assert_eq!(h0.cols(), HIDDEN_DIM);

    let mut h = h0;
    let mut steps = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        // Messages m(h_e, h_i) for every pair, self state first.
        let mut x_msg = Matrix::zeros(n_states * n_pairs, MSG_IN);
        for s in 0..n_states {
            for (p, &(e, i)) in adj.pairs().iter().enumerate() {
                let row = x_msg.row_mut(s * n_pairs + p);
                row[..HIDDEN_DIM].copy_from_slice(h.row(s * n_links + e as usize));
                row[HIDDEN_DIM..].copy_from_slice(h.row(s * n_links + i as usize));
            }
        }
        let (m, msg_cache) = message.forward(x_msg);

        // Aggregate per receiver: concat(elementwise min, elementwise max).
        let mut x_upd = Matrix::zeros(n_states * n_links, UPD_IN);
        let mut argmin = vec![NO_PAIR; n_states * n_links * HIDDEN_DIM];
        let mut argmax = vec![NO_PAIR; n_states * n_links * HIDDEN_DIM];
        for s in 0..n_states {
            for e in 0..n_links {
                let row_idx = s * n_links + e;
                let group = adj.group(e);
                {
                    let row = x_upd.row_mut(row_idx);
                    row[..HIDDEN_DIM].copy_from_slice(h.row(row_idx));
                }
                if group.is_empty() {
                    continue; // aggregation of an empty neighborhood is zero
                }
                let arg_base = row_idx * HIDDEN_DIM;
                for p in group {
                    let mrow = m.row(s * n_pairs + p);
                    let row = x_upd.row_mut(row_idx);
                    for c in 0..HIDDEN_DIM {
                        let v = mrow[c];
                        let min_slot = &mut row[HIDDEN_DIM + c];
                        if argmin[arg_base + c] == NO_PAIR || v < *min_slot {
                            *min_slot = v;
                            argmin[arg_base + c] = (s * n_pairs + p) as u32;
                        }
                        let max_slot = &mut row[2 * HIDDEN_DIM + c];
                        if argmax[arg_base + c] == NO_PAIR || v > *max_slot {
                            *max_slot = v;
                            argmax[arg_base + c] = (s * n_pairs + p) as u32;
                        }
                    }
                }
            }
        }
        let (h_next, upd_cache) = update.forward(x_upd);
        steps.push(StepCache { msg: msg_cache, upd: upd_cache, argmin, argmax });
        h = h_next;
    }
    (h, TrunkCache { steps })
}

/// Backward through all rounds; returns accumulated message/update gradients.
pub(crate) fn backward(
    message: &Mlp,
    update: &Mlp,
    adj: &Adjacency,
    cache: &TrunkCache,
    d_hk: Matrix,
) -> (MlpGrads, MlpGrads) {
    let n_links = adj.n_links();
    let n_pairs = adj.n_pairs();
    let n_states = d_hk.rows() / n_links;
    let mut msg_grads = MlpGrads::zeros_like(message);
    let mut upd_grads = MlpGrads::zeros_like(update);

    let mut d_h = d_hk;
    for step in cache.steps.iter().rev() {
        let (g_upd, d_x_upd) = update.backward(&step.upd, &d_h);
        upd_grads.add_assign(&g_upd);

        // Self part of the update input plus min/max routed message grads.
        let mut d_h_prev = Matrix::zeros(n_states * n_links, HIDDEN_DIM);
        let mut d_m = Matrix::zeros(n_states * n_pairs, HIDDEN_DIM);
        for row_idx in 0..n_states * n_links {
            let dx = d_x_upd.row(row_idx);
            d_h_prev.row_mut(row_idx).copy_from_slice(&dx[..HIDDEN_DIM]);
            let arg_base = row_idx * HIDDEN_DIM;
            for c in 0..HIDDEN_DIM {
                let pmin = step.argmin[arg_base + c];
                if pmin != NO_PAIR {
                    d_m.row_mut(pmin as usize)[c] += dx[HIDDEN_DIM + c];
                }
                let pmax = step.argmax[arg_base + c];
                if pmax != NO_PAIR {
                    d_m.row_mut(pmax as usize)[c] += dx[AGG_DIM + c];
                }
            }
        }
        let (g_msg, d_x_msg) = message.backward(&step.msg, &d_m);
        msg_grads.add_assign(&g_msg);

        for s in 0..n_states {
            for (p, &(e, i)) in adj.pairs().iter().enumerate() {
                let dx = d_x_msg.row(s * n_pairs + p);
                let e_row = d_h_prev.row_mut(s * n_links + e as usize);
                for (acc, v) in e_row.iter_mut().zip(&dx[..HIDDEN_DIM]) {
                    *acc += v;
                }
                let i_row = d_h_prev.row_mut(s * n_links + i as usize);
                for (acc, v) in i_row.iter_mut().zip(&dx[HIDDEN_DIM..]) {
                    *acc += v;
                }
            }
        }
        d_h = d_h_prev;
    }
    (msg_grads, upd_grads)
}
