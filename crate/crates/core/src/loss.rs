//! Training objective.
//!
//! `λ_count·CE(k) + λ_action·mean BCE(candidates) + λ_loc·Σ_g KL(loc_g) + λ_obj·Σ_g KL(obj_g)`
//!
//! Pointer targets spread mass uniformly over the gold span, or put all of it
//! on the sentinel for an empty slot. Pointer terms are written as
//! KL(target‖p), i.e. cross-entropy minus the target entropy: same gradients,
//! and the loss reaches zero when the prediction matches the target. The
//! location and object heads are teacher-forced with the gold action and
//! location spans.

use alloc::vec::Vec;

use crate::data::{NlcExample, Span};
use crate::error::{Error, Result};
use crate::heads::enumerate_action_candidates;
use crate::model::{Forward, Model};
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

/// Unweighted value of each loss term (zero when its weight is zero).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub count: f64,
    pub action: f64,
    pub location: f64,
    pub object: f64,
}

pub struct LossOutput {
    pub graph: Graph,
    pub loss: Var,
    pub terms: LossTerms,
}

impl LossOutput {
    pub fn value(&self) -> f64 {
        self.graph.value(self.loss).item()
    }
}

/// Pointer target over `len` tokens plus the sentinel.
pub fn pointer_target(len: usize, span: Option<Span>) -> Tensor {
    let mut t = Tensor::zeros(&[len + 1, 1]);
    match span {
        Some(s) => {
            let w = 1.0 / s.len() as f64;
            for i in s.positions() {
                t.data_mut()[i] = w;
            }
        }
        None => t.data_mut()[len] = 1.0,
    }
    t
}

/// Binary labels for candidates: 1 for gold action spans.
pub fn action_targets(candidates: &[Span], gold: &[Span]) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| if gold.contains(c) { 1.0 } else { 0.0 })
        .collect()
}

pub fn compute_loss(example: &NlcExample, model: &Model) -> Result<LossOutput> {
    let cfg = &model.config;
    let k_gold = example.groups.len();
    if k_gold > cfg.k_max {
        return Err(Error::Data(alloc::format!(
            "example {:?} has {k_gold} groups, more than k_max = {}",
            example.id,
            cfg.k_max
        )));
    }
    let mut fwd = model.forward(&example.tokens, &example.dep_heads)?;
    let len = fwd.len;
    let mut terms = LossTerms::default();
    let mut weighted: Vec<Var> = Vec::new();

    if cfg.lambda_count > 0.0 {
        let logits = fwd.group_count_logits()?;
        let mut target = Tensor::zeros(&[cfg.k_max + 1, 1]);
        target.data_mut()[k_gold] = 1.0;
        let ce = fwd.graph.softmax_kl(logits, target)?;
        terms.count = fwd.graph.value(ce).item();
        weighted.push(fwd.graph.scale(ce, cfg.lambda_count));
    }

    if cfg.lambda_action > 0.0 {
        let candidates = enumerate_action_candidates(len, cfg.max_span);
        let gold: Vec<Span> = example.groups.iter().map(|g| g.action).collect();
        let targets = action_targets(&candidates, &gold);
        let logits = fwd.action_logits(&candidates)?;
        let bce = fwd.graph.bce_logits(logits, &targets)?;
        let mean = fwd.graph.scale(bce, 1.0 / candidates.len() as f64);
        terms.action = fwd.graph.value(mean).item();
        weighted.push(fwd.graph.scale(mean, cfg.lambda_action));
    }

    let want_loc = cfg.lambda_loc > 0.0;
    let want_obj = cfg.lambda_obj > 0.0;
    if (want_loc || want_obj) && k_gold > 0 {
        let (loc, obj) = pointer_terms(&mut fwd, example, want_loc, want_obj)?;
        if let Some(v) = loc {
            terms.location = fwd.graph.value(v).item();
            weighted.push(fwd.graph.scale(v, cfg.lambda_loc));
        }
        if let Some(v) = obj {
            terms.object = fwd.graph.value(v).item();
            weighted.push(fwd.graph.scale(v, cfg.lambda_obj));
        }
    }

    let mut graph = fwd.graph;
    let loss = match weighted.split_first() {
        None => graph.input(Tensor::scalar(0.0)),
        Some((&first, rest)) => {
            let mut acc = first;
            for &v in rest {
                acc = graph.add(acc, v)?;
            }
            acc
        }
    };
    Ok(LossOutput { graph, loss, terms })
}

/// Summed location and object divergences with gold upstream spans.
fn pointer_terms(
    fwd: &mut Forward<'_>,
    example: &NlcExample,
    want_loc: bool,
    want_obj: bool,
) -> Result<(Option<Var>, Option<Var>)> {
    let len = fwd.len;
    let groups = &example.groups;
    let actions: Vec<Span> = groups.iter().map(|g| g.action).collect();
    let e_actions = fwd.span_embeddings(&actions)?;
    let mut loc_total: Option<Var> = None;
    let mut obj_total: Option<Var> = None;
    let accumulate = |g: &mut Graph, total: &mut Option<Var>, v: Var| -> Result<()> {
        *total = Some(match *total {
            None => v,
            Some(acc) => g.add(acc, v)?,
        });
        Ok(())
    };
    for (i, group) in groups.iter().enumerate() {
        let e_a = fwd.graph.slice_cols(e_actions, i, 1)?;
        if want_loc {
            let logits = fwd.location_logits(e_a)?;
            let kl = fwd
                .graph
                .softmax_kl(logits, pointer_target(len, group.location))?;
            accumulate(&mut fwd.graph, &mut loc_total, kl)?;
        }
        if want_obj {
            let e_l = fwd.location_value(group.location)?;
            let logits = fwd.object_logits(e_a, e_l)?;
            let kl = fwd
                .graph
                .softmax_kl(logits, pointer_target(len, group.object))?;
            accumulate(&mut fwd.graph, &mut obj_total, kl)?;
        }
    }
    Ok((loc_total, obj_total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn pointer_targets() {
        let t = pointer_target(4, Some(Span::new(1, 2)));
        assert_eq!(t.data(), &[0.0, 0.5, 0.5, 0.0, 0.0]);
        let t = pointer_target(3, None);
        assert_eq!(t.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn divergence_shrinks_towards_zero_as_prediction_approaches_target() {
        let target = pointer_target(3, Some(Span::new(0, 1)));
        let mut last = f64::INFINITY;
        for scale in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let mut g = Graph::new();
            let logits = g.input(Tensor::column(vec![scale, scale, 0.0, 0.0]));
            let kl = g.softmax_kl(logits, target.clone()).unwrap();
            let v = g.value(kl).item();
            assert!(v < last, "{v} !< {last}");
            last = v;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn bce_shrinks_towards_zero() {
        let mut last = f64::INFINITY;
        for z in [0.0, 2.0, 5.0, 10.0, 30.0] {
            let mut g = Graph::new();
            let l = g.input(Tensor::column(vec![z, -z]));
            let b = g.bce_logits(l, &[1.0, 0.0]).unwrap();
            let v = g.value(b).item();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-12);
    }
}
