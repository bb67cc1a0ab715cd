//! Token embeddings, BiLSTMs, and the dependency-fused sentence encoder.
//!
//! The sentence encoder computes `H(l+1) = BiLSTM(f(H(l)))` where column `i`
//! of `f(H)` is `g(h_i, h_parent(i))`. With [`InteractionMode::Passthrough`]
//! `g` returns `h_i` and the stack is a plain multi-layer BiLSTM.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::InteractionMode;
use crate::data::Span;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::XorShift64Star;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

pub const UNK: &str = "<unk>";

/// Token vocabulary; index 0 is reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Build from tokens in first-seen order, skipping duplicates.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab {
            tokens: alloc::vec![UNK.to_string()],
            index: BTreeMap::new(),
        };
        v.index.insert(UNK.to_string(), 0);
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    /// Sorted vocabulary of every token in `examples`.
    pub fn from_examples(examples: &[crate::data::NlcExample]) -> Self {
        let mut all: Vec<&str> = examples
            .iter()
            .flat_map(|e| e.tokens.iter().map(String::as_str))
            .collect();
        all.sort_unstable();
        all.dedup();
        Vocab::new(all)
    }

    /// Rebuild from a stored token list whose first entry is the unknown token.
    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Data(alloc::format!(
                "vocabulary must start with {UNK:?}"
            )));
        }
        let v = Vocab::new(tokens.iter().skip(1));
        if v.tokens.len() != tokens.len() {
            return Err(Error::Data("vocabulary contains duplicates".into()));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary plus a `[V, d]` vector table; row 0 is the unknown token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    pub vectors: Tensor,
}

impl EmbeddingTable {
    /// Random table: uniform in [-0.1, 0.1], unknown row zero.
    pub fn random(vocab: Vocab, d: usize, rng: &mut XorShift64Star) -> Self {
        let mut vectors = Tensor::zeros(&[vocab.len(), d]);
        for v in &mut vectors.data_mut()[d..] {
            *v = rng.uniform(-0.1, 0.1);
        }
        EmbeddingTable { vocab, vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn row(&self, token: &str) -> &[f64] {
        let d = self.dim();
        let i = self.vocab.lookup(token);
        &self.vectors.data()[i * d..(i + 1) * d]
    }
}

/// Embed `tokens` as the columns of a `[d, L]` matrix.
pub fn embed_tokens(
    g: &mut Graph,
    store: &ParamStore,
    table: ParamId,
    vocab: &Vocab,
    tokens: &[String],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Domain("cannot embed an empty token list".into()));
    }
    let idx: Vec<usize> = tokens.iter().map(|t| vocab.lookup(t)).collect();
    let rows = g.param(store, table);
    let cols = g.transpose(rows);
    g.gather_cols(cols, &idx)
}

/// One LSTM direction. Gates are stacked in the order input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        d: usize,
        rng: &mut XorShift64Star,
    ) -> Self {
        let bound = 1.0 / libm::sqrt(d as f64);
        let mut uniform = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
            Tensor::matrix(rows, cols, data).expect("shape")
        };
        let w_ih = uniform(4 * hidden, d_in);
        let w_hh = uniform(4 * hidden, hidden);
        let mut bias = Tensor::zeros(&[4 * hidden, 1]);
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmParams {
            w_ih: store.add(&alloc::format!("{prefix}.w_ih"), w_ih),
            w_hh: store.add(&alloc::format!("{prefix}.w_hh"), w_hh),
            bias: store.add(&alloc::format!("{prefix}.bias"), bias),
            hidden,
        }
    }

    /// Input projection `W_ih X + b` for every column of `x`.
    fn project(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w_ih);
        let b = g.param(store, self.bias);
        let wx = g.matmul(w, x)?;
        g.add_column(wx, b)
    }

    /// One batched step. `state` is `None` for the zero initial state.
    fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x_proj: Var,
        state: Option<(Var, Var)>,
    ) -> Result<(Var, Var)> {
        let h = self.hidden;
        let gates = match state {
            Some((h_prev, _)) => {
                let w = g.param(store, self.w_hh);
                let wh = g.matmul(w, h_prev)?;
                g.add(x_proj, wh)?
            }
            None => x_proj,
        };
        let i = g.slice_rows(gates, 0, h)?;
        let i = g.sigmoid(i);
        let f = g.slice_rows(gates, h, h)?;
        let f = g.sigmoid(f);
        let c_in = g.slice_rows(gates, 2 * h, h)?;
        let c_in = g.tanh(c_in);
        let o = g.slice_rows(gates, 3 * h, h)?;
        let o = g.sigmoid(o);
        let ic = g.mul(i, c_in)?;
        let c = match state {
            Some((_, c_prev)) => {
                let fc = g.mul(f, c_prev)?;
                g.add(fc, ic)?
            }
            None => ic,
        };
        let tc = g.tanh(c);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c))
    }
}

/// Forward and backward directions, each with hidden size `d/2`.
#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d: usize,
        rng: &mut XorShift64Star,
    ) -> Self {
        BiLstmParams {
            fwd: LstmParams::register(store, &alloc::format!("{prefix}.fwd"), d_in, d / 2, d, rng),
            bwd: LstmParams::register(store, &alloc::format!("{prefix}.bwd"), d_in, d / 2, d, rng),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 6] {
        [
            self.fwd.w_ih,
            self.fwd.w_hh,
            self.fwd.bias,
            self.bwd.w_ih,
            self.bwd.w_hh,
            self.bwd.bias,
        ]
    }
}

/// Column `i` of the result is `[forward state at i; backward state at i]`.
pub fn bilstm_encode(g: &mut Graph, store: &ParamStore, x: Var, p: &BiLstmParams) -> Result<Var> {
    let len = g.value(x).cols();
    if len == 0 {
        return Err(Error::Domain("BiLSTM over an empty sequence".into()));
    }
    let xf = p.fwd.project(g, store, x)?;
    let xb = p.bwd.project(g, store, x)?;

    let mut fwd = Vec::with_capacity(len);
    let mut state = None;
    for t in 0..len {
        let col = g.slice_cols(xf, t, 1)?;
        let s = p.fwd.step(g, store, col, state)?;
        fwd.push(s.0);
        state = Some(s);
    }
    let mut bwd = alloc::vec![fwd[0]; len];
    let mut state = None;
    for t in (0..len).rev() {
        let col = g.slice_cols(xb, t, 1)?;
        let s = p.bwd.step(g, store, col, state)?;
        bwd[t] = s.0;
        state = Some(s);
    }
    let f = g.concat(&fwd, 1)?;
    let b = g.concat(&bwd, 1)?;
    g.concat(&[f, b], 0)
}

/// Final-position BiLSTM outputs for many spans of the same sequence, as the
/// columns of a `[d, spans.len()]` matrix.
///
/// The forward half for span `[s, e]` is the forward state after reading
/// tokens `s..=e`; all spans are advanced together one step at a time, so the
/// state for every start position is computed once. The backward half at the
/// final position has only read token `e`.
pub fn encode_spans(
    g: &mut Graph,
    store: &ParamStore,
    x: Var,
    spans: &[Span],
    p: &BiLstmParams,
) -> Result<Var> {
    let len = g.value(x).cols();
    if spans.is_empty() {
        return Err(Error::Domain("no spans to encode".into()));
    }
    if let Some(s) = spans.iter().find(|s| s.start > s.end || s.end >= len) {
        return Err(Error::Domain(alloc::format!(
            "span [{}, {}] outside a sequence of length {len}",
            s.start,
            s.end
        )));
    }
    let steps = spans.iter().map(Span::len).max().unwrap_or(1);

    let xf = p.fwd.project(g, store, x)?;
    let mut outputs = Vec::with_capacity(steps);
    let mut offsets = Vec::with_capacity(steps);
    let mut offset = 0;
    let mut state: Option<(Var, Var)> = None;
    for t in 0..steps {
        let active = len - t;
        let input = g.slice_cols(xf, t, active)?;
        let prev = match state {
            Some((h, c)) => {
                let h = g.slice_cols(h, 0, active)?;
                let c = g.slice_cols(c, 0, active)?;
                Some((h, c))
            }
            None => None,
        };
        let s = p.fwd.step(g, store, input, prev)?;
        outputs.push(s.0);
        offsets.push(offset);
        offset += active;
        state = Some(s);
    }
    let all_fwd = g.concat(&outputs, 1)?;

    let xb = p.bwd.project(g, store, x)?;
    let (last_bwd, _) = p.bwd.step(g, store, xb, None)?;

    let f_idx: Vec<usize> = spans
        .iter()
        .map(|s| offsets[s.end - s.start] + s.start)
        .collect();
    let b_idx: Vec<usize> = spans.iter().map(|s| s.end).collect();
    let f = g.gather_cols(all_fwd, &f_idx)?;
    let b = g.gather_cols(last_bwd, &b_idx)?;
    g.concat(&[f, b], 0)
}

/// Parameters of the learned interaction `tanh(W_g [h_i; h_p] + b_g)`.
#[derive(Clone, Debug)]
pub struct InteractionParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl InteractionParams {
    pub fn register(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut XorShift64Star) -> Self {
        let bound = 1.0 / libm::sqrt(d as f64);
        let w = (0..d * 2 * d).map(|_| rng.uniform(-bound, bound)).collect();
        InteractionParams {
            w: store.add(
                &alloc::format!("{prefix}.w"),
                Tensor::matrix(d, 2 * d, w).expect("shape"),
            ),
            b: store.add(&alloc::format!("{prefix}.b"), Tensor::zeros(&[d, 1])),
        }
    }
}

/// `g(h, h_parent)` applied column-wise to two `[d, n]` matrices.
pub fn interaction_g(
    g: &mut Graph,
    store: &ParamStore,
    h: Var,
    h_parent: Var,
    params: Option<&InteractionParams>,
) -> Result<Var> {
    let (hs, ps) = (g.value(h).shape().to_vec(), g.value(h_parent).shape().to_vec());
    if g.value(h).dims2() != g.value(h_parent).dims2() {
        return Err(Error::Dimension {
            op: "interaction_g",
            left: hs,
            right: ps,
        });
    }
    match params {
        None => Ok(h),
        Some(p) => {
            let both = g.concat(&[h, h_parent], 0)?;
            let w = g.param(store, p.w);
            let b = g.param(store, p.b);
            let wx = g.matmul(w, both)?;
            let z = g.add_column(wx, b)?;
            Ok(g.tanh(z))
        }
    }
}

/// Stack of `num_layers` BiLSTMs with a dependency interaction before each.
#[derive(Clone, Debug)]
pub struct DepFusedEncoder {
    pub mode: InteractionMode,
    /// One entry per layer; interaction parameters only in learned mode.
    pub layers: Vec<(Option<InteractionParams>, BiLstmParams)>,
}

impl DepFusedEncoder {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        num_layers: usize,
        mode: InteractionMode,
        rng: &mut XorShift64Star,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inter = match mode {
                    InteractionMode::Learned => Some(InteractionParams::register(
                        store,
                        &alloc::format!("{prefix}.layer{l}.interaction"),
                        d,
                        rng,
                    )),
                    InteractionMode::Passthrough => None,
                };
                let lstm =
                    BiLstmParams::register(store, &alloc::format!("{prefix}.layer{l}"), d, d, rng);
                (inter, lstm)
            })
            .collect();
        DepFusedEncoder { mode, layers }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for (inter, lstm) in &self.layers {
            if let Some(p) = inter {
                ids.push(p.w);
                ids.push(p.b);
            }
            ids.extend(lstm.param_ids());
        }
        ids
    }
}

/// Encode `[d, L]` embeddings with dependency heads; the result is `E_S`.
pub fn dep_fused_encode(
    g: &mut Graph,
    store: &ParamStore,
    embeddings: Var,
    dep_heads: &[usize],
    enc: &DepFusedEncoder,
) -> Result<Var> {
    let len = g.value(embeddings).cols();
    if dep_heads.len() != len {
        return Err(Error::Data(alloc::format!(
            "{} dependency heads for {len} tokens",
            dep_heads.len()
        )));
    }
    if let Some(i) = dep_heads.iter().position(|&h| h >= len) {
        return Err(Error::Data(alloc::format!(
            "token {i} has head {} outside [0, {len})",
            dep_heads[i]
        )));
    }
    let mut h = embeddings;
    for (inter, lstm) in &enc.layers {
        let fused = match inter {
            Some(p) => {
                let parents = g.gather_cols(h, dep_heads)?;
                interaction_g(g, store, h, parents, Some(p))?
            }
            None => h,
        };
        h = bilstm_encode(g, store, fused, lstm)?;
    }
    Ok(h)
}
