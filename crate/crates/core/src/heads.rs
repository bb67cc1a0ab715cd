//! The four prediction heads.
//!
//! * group count: `softmax(W1 tanh(W2 E_S|A + W3 E_S|L + W4 E_S|O))` over `0..=k_max`
//! * action: `sigmoid(w_A^T tanh(W_a E_A + W_s E_S|A))` per candidate span
//! * location: pointer softmax over `w_L^T tanh(W1 E_si + W2 E_A + W3 E_S|L)`
//! * object: pointer softmax over `w_O^T tanh(W1 E_si + W2 E_A + W3 E_L + W4 E_S|O)`
//!
//! Pointer heads score `L + 1` positions: the tokens plus a trainable NIL
//! sentinel at index `L` that stands for an empty slot.

use alloc::vec::Vec;

use crate::data::Span;
use crate::error::Result;
use crate::model::Forward;
use crate::params::{ParamId, ParamStore};
use crate::rng::XorShift64Star;
use crate::tape::{Graph, Var};
use crate::tensor::{self, Tensor};

fn uniform(rng: &mut XorShift64Star, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

#[derive(Clone, Debug)]
pub struct GroupCountParams {
    pub w1: ParamId,
    pub w2_sa: ParamId,
    pub w3_sl: ParamId,
    pub w4_so: ParamId,
    /// Type queries producing E_S|A, E_S|L and E_S|O for the classifier.
    pub q_a: ParamId,
    pub q_l: ParamId,
    pub q_o: ParamId,
}

#[derive(Clone, Debug)]
pub struct ActionHeadParams {
    pub w_out: ParamId,
    pub w_a: ParamId,
    pub w_s: ParamId,
}

#[derive(Clone, Debug)]
pub struct LocationHeadParams {
    pub w_out: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub w3: ParamId,
    pub nil: ParamId,
}

#[derive(Clone, Debug)]
pub struct ObjectHeadParams {
    pub w_out: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub w3: ParamId,
    pub w4: ParamId,
    pub nil: ParamId,
}

impl GroupCountParams {
    pub fn register(store: &mut ParamStore, d: usize, k_max: usize, rng: &mut XorShift64Star) -> Self {
        let b = 1.0 / libm::sqrt(d as f64);
        GroupCountParams {
            w1: store.add("count.w1", uniform(rng, k_max + 1, d, b)),
            w2_sa: store.add("count.w2_sa", uniform(rng, d, d, b)),
            w3_sl: store.add("count.w3_sl", uniform(rng, d, d, b)),
            w4_so: store.add("count.w4_so", uniform(rng, d, d, b)),
            q_a: store.add("count.q_a", uniform(rng, d, 1, b)),
            q_l: store.add("count.q_l", uniform(rng, d, 1, b)),
            q_o: store.add("count.q_o", uniform(rng, d, 1, b)),
        }
    }
}

impl ActionHeadParams {
    pub fn register(store: &mut ParamStore, d: usize, rng: &mut XorShift64Star) -> Self {
        let b = 1.0 / libm::sqrt(d as f64);
        ActionHeadParams {
            w_out: store.add("action.w_out", uniform(rng, d, 1, b)),
            w_a: store.add("action.w_a", uniform(rng, d, d, b)),
            w_s: store.add("action.w_s", uniform(rng, d, d, b)),
        }
    }
}

impl LocationHeadParams {
    pub fn register(store: &mut ParamStore, d: usize, rng: &mut XorShift64Star) -> Self {
        let b = 1.0 / libm::sqrt(d as f64);
        LocationHeadParams {
            w_out: store.add("location.w_out", uniform(rng, d, 1, b)),
            w1: store.add("location.w1", uniform(rng, d, d, b)),
            w2: store.add("location.w2", uniform(rng, d, d, b)),
            w3: store.add("location.w3", uniform(rng, d, d, b)),
            nil: store.add("location.nil", uniform(rng, d, 1, b)),
        }
    }
}

impl ObjectHeadParams {
    pub fn register(store: &mut ParamStore, d: usize, rng: &mut XorShift64Star) -> Self {
        let b = 1.0 / libm::sqrt(d as f64);
        ObjectHeadParams {
            w_out: store.add("object.w_out", uniform(rng, d, 1, b)),
            w1: store.add("object.w1", uniform(rng, d, d, b)),
            w2: store.add("object.w2", uniform(rng, d, d, b)),
            w3: store.add("object.w3", uniform(rng, d, d, b)),
            w4: store.add("object.w4", uniform(rng, d, d, b)),
            nil: store.add("object.nil", uniform(rng, d, 1, b)),
        }
    }
}

/// `W x` for a parameter matrix `W`.
fn apply(g: &mut Graph, store: &ParamStore, w: ParamId, x: Var) -> Result<Var> {
    let wv = g.param(store, w);
    g.matmul(wv, x)
}

/// `w^T x` for a `[d, 1]` parameter `w`.
fn project_out(g: &mut Graph, store: &ParamStore, w: ParamId, x: Var) -> Result<Var> {
    let wv = g.param(store, w);
    let wt = g.transpose(wv);
    g.matmul(wt, x)
}

/// Group-count logits `[k_max + 1, 1]`.
pub fn group_count_logits(
    g: &mut Graph,
    store: &ParamStore,
    p: &GroupCountParams,
    e_sa: Var,
    e_sl: Var,
    e_so: Var,
) -> Result<Var> {
    let a = apply(g, store, p.w2_sa, e_sa)?;
    let l = apply(g, store, p.w3_sl, e_sl)?;
    let o = apply(g, store, p.w4_so, e_so)?;
    let al = g.add(a, l)?;
    let alo = g.add(al, o)?;
    let t = g.tanh(alo);
    apply(g, store, p.w1, t)
}

/// Action logits `[1, N]` for `N` candidates given their embeddings and
/// attention summaries (both `[d, N]`).
pub fn action_logits(
    g: &mut Graph,
    store: &ParamStore,
    p: &ActionHeadParams,
    e_a: Var,
    e_sa: Var,
) -> Result<Var> {
    let a = apply(g, store, p.w_a, e_a)?;
    let s = apply(g, store, p.w_s, e_sa)?;
    let sum = g.add(a, s)?;
    let t = g.tanh(sum);
    project_out(g, store, p.w_out, t)
}

/// Pointer logits `[L + 1, 1]`: `w^T tanh(W1 key_i + context)` where the keys
/// are the sentence columns followed by the sentinel.
fn pointer_logits(
    g: &mut Graph,
    store: &ParamStore,
    e_s: Var,
    nil: ParamId,
    w1: ParamId,
    w_out: ParamId,
    context: Var,
) -> Result<Var> {
    let nil = g.param(store, nil);
    let keys = g.concat(&[e_s, nil], 1)?;
    let k = apply(g, store, w1, keys)?;
    let z = g.add_column(k, context)?;
    let t = g.tanh(z);
    let row = project_out(g, store, w_out, t)?;
    Ok(g.transpose(row))
}

pub fn location_logits(
    g: &mut Graph,
    store: &ParamStore,
    p: &LocationHeadParams,
    e_s: Var,
    e_a: Var,
    e_sl: Var,
) -> Result<Var> {
    let a = apply(g, store, p.w2, e_a)?;
    let l = apply(g, store, p.w3, e_sl)?;
    let ctx = g.add(a, l)?;
    pointer_logits(g, store, e_s, p.nil, p.w1, p.w_out, ctx)
}

pub fn object_logits(
    g: &mut Graph,
    store: &ParamStore,
    p: &ObjectHeadParams,
    e_s: Var,
    e_a: Var,
    e_l: Var,
    e_so: Var,
) -> Result<Var> {
    let a = apply(g, store, p.w2, e_a)?;
    let l = apply(g, store, p.w3, e_l)?;
    let o = apply(g, store, p.w4, e_so)?;
    let al = g.add(a, l)?;
    let ctx = g.add(al, o)?;
    pointer_logits(g, store, e_s, p.nil, p.w1, p.w_out, ctx)
}

/// Every contiguous span of length `1..=max_span`, ordered by `(start, end)`.
pub fn enumerate_action_candidates(len: usize, max_span: usize) -> Vec<Span> {
    let mut out = Vec::new();
    for s in 0..len {
        for e in s..len.min(s + max_span) {
            out.push(Span::new(s, e));
        }
    }
    out
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities over `0..=k_max` and the chosen group count.
pub fn predict_group_count(fwd: &mut Forward<'_>) -> Result<(Tensor, usize)> {
    let logits = fwd.group_count_logits()?;
    let probs = tensor::softmax(fwd.graph.value(logits))?;
    let k = argmax(probs.data());
    Ok((probs, k))
}

/// Probability that each span is an action.
pub fn score_action_candidates(fwd: &mut Forward<'_>, spans: &[Span]) -> Result<Vec<f64>> {
    let logits = fwd.action_logits(spans)?;
    Ok(tensor::sigmoid(fwd.graph.value(logits)).into_data())
}

pub fn score_action_candidate(fwd: &mut Forward<'_>, span: Span) -> Result<f64> {
    Ok(score_action_candidates(fwd, &[span])?[0])
}

/// Location pointer distribution over `L` tokens plus the sentinel.
pub fn score_location_positions(fwd: &mut Forward<'_>, action: Span) -> Result<Tensor> {
    let e_a = fwd.span_embeddings(&[action])?;
    let logits = fwd.location_logits(e_a)?;
    tensor::softmax(fwd.graph.value(logits))
}

/// Object pointer distribution given the group's action and (possibly empty) location.
pub fn score_object_positions(
    fwd: &mut Forward<'_>,
    action: Span,
    location: Option<Span>,
) -> Result<Tensor> {
    let e_a = fwd.span_embeddings(&[action])?;
    let e_l = fwd.location_value(location)?;
    let logits = fwd.object_logits(e_a, e_l)?;
    tensor::softmax(fwd.graph.value(logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn small_candidate_sets() {
        let c = enumerate_action_candidates(3, 2);
        assert_eq!(
            c,
            vec![
                Span::new(0, 0),
                Span::new(0, 1),
                Span::new(1, 1),
                Span::new(1, 2),
                Span::new(2, 2)
            ]
        );
        assert_eq!(enumerate_action_candidates(1, 3), vec![Span::new(0, 0)]);
    }

    #[test]
    fn candidate_count_matches_brute_force() {
        for len in 1..10usize {
            for max_span in 1..5usize {
                let mut brute = 0;
                for s in 0..len {
                    for e in 0..len {
                        if e >= s && e - s < max_span {
                            brute += 1;
                        }
                    }
                }
                assert_eq!(enumerate_action_candidates(len, max_span).len(), brute);
                if max_span <= len {
                    assert_eq!(brute, len * max_span - max_span * (max_span - 1) / 2);
                }
            }
        }
        assert_eq!(enumerate_action_candidates(6, 3).len(), 15);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4]), 1);
    }
}
