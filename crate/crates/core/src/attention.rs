//! SLF attention: a query vector scores every sentence column with
//! `v_i = (W_Q q)^T (W_K E_S[:, i])`, the scores are softmax-normalized, and
//! the summary is `E_S a_w`. There is no `1/sqrt(d)` scaling.
//!
//! Several heads are mixed by a trainable `[h, 1]` vector: stacking the `h`
//! summaries as a `[d, h]` matrix and multiplying by `W_h` yields a `d`-vector.
//!
//! All functions accept a batch of `N` queries as the columns of a `[d, N]`
//! matrix; each column is processed independently.

use alloc::vec::Vec;

use crate::config::AttentionMode;
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::rng::XorShift64Star;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SlfAttentionHead {
    pub w_q: ParamId,
    pub w_k: ParamId,
}

#[derive(Clone, Debug)]
pub struct MultiHeadSlfAttention {
    pub heads: Vec<SlfAttentionHead>,
    /// `[h, 1]` mixing weights.
    pub w_h: ParamId,
    pub mode: AttentionMode,
}

impl MultiHeadSlfAttention {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        h: usize,
        mode: AttentionMode,
        rng: &mut XorShift64Star,
    ) -> Self {
        let bound = 1.0 / libm::sqrt(d as f64);
        let heads = (0..h)
            .map(|j| {
                let mut square = |zero: bool| {
                    let data = (0..d * d)
                        .map(|_| if zero { 0.0 } else { rng.uniform(-bound, bound) })
                        .collect();
                    Tensor::matrix(d, d, data).expect("shape")
                };
                let w_q = square(mode == AttentionMode::Uniform);
                let w_k = square(false);
                SlfAttentionHead {
                    w_q: store.add(&alloc::format!("{prefix}.head{j}.w_q"), w_q),
                    w_k: store.add(&alloc::format!("{prefix}.head{j}.w_k"), w_k),
                }
            })
            .collect();
        let w_h = store.add(
            &alloc::format!("{prefix}.w_h"),
            Tensor::filled(&[h, 1], 1.0 / h as f64),
        );
        MultiHeadSlfAttention { heads, w_h, mode }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.heads.iter().flat_map(|h| [h.w_q, h.w_k]).collect();
        ids.push(self.w_h);
        ids
    }
}

/// Output of one attention call: summaries `[d, N]` and per-head weights `[L, N]`.
#[derive(Clone, Debug)]
pub struct Attended {
    pub summary: Var,
    pub weights: Vec<Var>,
}

/// Single-head SLF attention. Returns `(E_cond [d, N], a_w [L, N])`.
pub fn slf_attention(
    g: &mut Graph,
    store: &ParamStore,
    queries: Var,
    e_s: Var,
    head: &SlfAttentionHead,
    mode: AttentionMode,
) -> Result<(Var, Var)> {
    let len = g.value(e_s).cols();
    let n = g.value(queries).cols();
    let scores = match mode {
        AttentionMode::Slf => {
            let wq = g.param(store, head.w_q);
            let wk = g.param(store, head.w_k);
            let q = g.matmul(wq, queries)?;
            let k = g.matmul(wk, e_s)?;
            let kt = g.transpose(k);
            g.matmul(kt, q)?
        }
        // W_Q = 0 makes every score zero
        AttentionMode::Uniform => g.input(Tensor::zeros(&[len, n])),
    };
    let a_w = g.softmax_cols(scores)?;
    let e_cond = g.matmul(e_s, a_w)?;
    Ok((e_cond, a_w))
}

/// Mix the heads' summaries with `W_h`.
pub fn multi_head_slf_attention(
    g: &mut Graph,
    store: &ParamStore,
    queries: Var,
    e_s: Var,
    mh: &MultiHeadSlfAttention,
) -> Result<Attended> {
    let w_h = g.param(store, mh.w_h);
    let mut summary: Option<Var> = None;
    let mut weights = Vec::with_capacity(mh.heads.len());
    for (j, head) in mh.heads.iter().enumerate() {
        let (e_cond, a_w) = slf_attention(g, store, queries, e_s, head, mh.mode)?;
        weights.push(a_w);
        let w = g.slice_rows(w_h, j, 1)?;
        let term = g.scale_by(e_cond, w)?;
        summary = Some(match summary {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    Ok(Attended {
        summary: summary.expect("at least one head"),
        weights,
    })
}
