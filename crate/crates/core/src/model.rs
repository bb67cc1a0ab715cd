//! The full parameter set and the per-example forward session.

use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{multi_head_slf_attention, Attended, MultiHeadSlfAttention};
use crate::config::TrainConfig;
use crate::data::Span;
use crate::encoders::{
    dep_fused_encode, embed_tokens, encode_spans, BiLstmParams, DepFusedEncoder, EmbeddingTable,
    Vocab,
};
use crate::error::{Error, Result};
use crate::heads::{
    self, ActionHeadParams, GroupCountParams, LocationHeadParams, ObjectHeadParams,
};
use crate::params::{ParamId, ParamStore};
use crate::rng::XorShift64Star;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

const INIT_STREAM: u64 = 0x1417;

/// Every trainable tensor of the parser, with typed handles into the store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub embedding: ParamId,
    pub nlc_encoder: DepFusedEncoder,
    pub slot_encoder: BiLstmParams,
    pub attn_action: MultiHeadSlfAttention,
    pub attn_location: MultiHeadSlfAttention,
    pub attn_object: MultiHeadSlfAttention,
    pub count: GroupCountParams,
    pub action: ActionHeadParams,
    pub location: LocationHeadParams,
    pub object: ObjectHeadParams,
}

impl Model {
    /// Randomly initialized model, seeded from `config.seed`.
    pub fn new(config: TrainConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = XorShift64Star::derived(config.seed, INIT_STREAM);
        let d = config.d;
        let mut params = ParamStore::new();
        let table = EmbeddingTable::random(vocab.clone(), d, &mut rng);
        let embedding = params.add("embedding", table.vectors);
        let nlc_encoder = DepFusedEncoder::register(
            &mut params,
            "nlc_encoder",
            d,
            config.num_layers,
            config.interaction,
            &mut rng,
        );
        let slot_encoder = BiLstmParams::register(&mut params, "slot_encoder", d, d, &mut rng);
        let mode = config.attention;
        let h = config.heads;
        let attn_action =
            MultiHeadSlfAttention::register(&mut params, "attention.action", d, h, mode, &mut rng);
        let attn_location =
            MultiHeadSlfAttention::register(&mut params, "attention.location", d, h, mode, &mut rng);
        let attn_object =
            MultiHeadSlfAttention::register(&mut params, "attention.object", d, h, mode, &mut rng);
        let count = GroupCountParams::register(&mut params, d, config.k_max, &mut rng);
        let action = ActionHeadParams::register(&mut params, d, &mut rng);
        let location = LocationHeadParams::register(&mut params, d, &mut rng);
        let object = ObjectHeadParams::register(&mut params, d, &mut rng);
        Ok(Model {
            config,
            vocab,
            params,
            embedding,
            nlc_encoder,
            slot_encoder,
            attn_action,
            attn_location,
            attn_object,
            count,
            action,
            location,
            object,
        })
    }

    /// Model whose embedding table is taken from `table` (e.g. pretrained vectors).
    pub fn with_embeddings(config: TrainConfig, table: EmbeddingTable) -> Result<Self> {
        if table.dim() != config.d {
            return Err(Error::Domain(alloc::format!(
                "embedding dimension {} does not match d = {}",
                table.dim(),
                config.d
            )));
        }
        let mut model = Model::new(config, table.vocab)?;
        *model.params.get_mut(model.embedding) = table.vectors;
        Ok(model)
    }

    /// Rebuild a model from stored tensors. Every parameter of the layout
    /// implied by `config` must be present with the right shape.
    pub fn from_parts(
        config: TrainConfig,
        vocab: Vocab,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let mut model = Model::new(config, vocab)?;
        let mut seen = alloc::vec![false; model.params.len()];
        for (name, t) in tensors {
            let id = model.params.id(&name).ok_or_else(|| {
                Error::Data(alloc::format!("unexpected parameter {name:?}"))
            })?;
            model.params.replace(&name, t)?;
            seen[id.index()] = true;
        }
        if let Some(missing) = model.params.ids().find(|id| !seen[id.index()]) {
            return Err(Error::Data(alloc::format!(
                "parameter {:?} missing",
                model.params.name(missing)
            )));
        }
        Ok(model)
    }

    /// Start a forward pass over one tokenized command.
    pub fn forward(&self, tokens: &[String], dep_heads: &[usize]) -> Result<Forward<'_>> {
        Forward::new(self, tokens, dep_heads)
    }

    /// Parameters of the head-specific parts, keyed by a group label.
    pub fn parameter_groups(&self) -> Vec<(&'static str, Vec<ParamId>)> {
        let c = &self.count;
        alloc::vec![
            ("embedding", alloc::vec![self.embedding]),
            ("nlc_encoder", self.nlc_encoder.param_ids()),
            ("slot_encoder", self.slot_encoder.param_ids().to_vec()),
            ("attention.action", self.attn_action.param_ids()),
            ("attention.location", self.attn_location.param_ids()),
            ("attention.object", self.attn_object.param_ids()),
            (
                "count",
                alloc::vec![c.w1, c.w2_sa, c.w3_sl, c.w4_so, c.q_a, c.q_l, c.q_o]
            ),
            (
                "action",
                alloc::vec![self.action.w_out, self.action.w_a, self.action.w_s]
            ),
            (
                "location",
                alloc::vec![
                    self.location.w_out,
                    self.location.w1,
                    self.location.w2,
                    self.location.w3,
                    self.location.nil
                ]
            ),
            (
                "object",
                alloc::vec![
                    self.object.w_out,
                    self.object.w1,
                    self.object.w2,
                    self.object.w3,
                    self.object.w4,
                    self.object.nil
                ]
            ),
        ]
    }
}

/// Sentence summaries conditioned on the three slot-type queries.
#[derive(Clone, Debug)]
pub struct TypeSummaries {
    pub action: Attended,
    pub location: Attended,
    pub object: Attended,
}

/// One forward pass: the tape plus the encoded sentence. Head outputs are
/// added to the same tape so a loss over them can be differentiated.
pub struct Forward<'m> {
    pub model: &'m Model,
    pub graph: Graph,
    pub len: usize,
    pub embeddings: Var,
    /// Dependency-fused sentence encoding `[d, L]`.
    pub e_s: Var,
    summaries: Option<TypeSummaries>,
}

impl<'m> Forward<'m> {
    pub fn new(model: &'m Model, tokens: &[String], dep_heads: &[usize]) -> Result<Self> {
        let mut graph = Graph::new();
        let store = &model.params;
        let embeddings = embed_tokens(&mut graph, store, model.embedding, &model.vocab, tokens)?;
        let e_s = dep_fused_encode(&mut graph, store, embeddings, dep_heads, &model.nlc_encoder)?;
        Ok(Forward {
            model,
            graph,
            len: tokens.len(),
            embeddings,
            e_s,
            summaries: None,
        })
    }

    /// `E_S|A`, `E_S|L`, `E_S|O` from the trainable type queries (computed once).
    pub fn type_summaries(&mut self) -> Result<TypeSummaries> {
        if let Some(s) = &self.summaries {
            return Ok(s.clone());
        }
        let m = self.model;
        let store = &m.params;
        let g = &mut self.graph;
        let qa = g.param(store, m.count.q_a);
        let ql = g.param(store, m.count.q_l);
        let qo = g.param(store, m.count.q_o);
        let s = TypeSummaries {
            action: multi_head_slf_attention(g, store, qa, self.e_s, &m.attn_action)?,
            location: multi_head_slf_attention(g, store, ql, self.e_s, &m.attn_location)?,
            object: multi_head_slf_attention(g, store, qo, self.e_s, &m.attn_object)?,
        };
        self.summaries = Some(s.clone());
        Ok(s)
    }

    pub fn group_count_logits(&mut self) -> Result<Var> {
        let s = self.type_summaries()?;
        heads::group_count_logits(
            &mut self.graph,
            &self.model.params,
            &self.model.count,
            s.action.summary,
            s.location.summary,
            s.object.summary,
        )
    }

    /// Slot-value encodings `[d, N]` of `spans`.
    pub fn span_embeddings(&mut self, spans: &[Span]) -> Result<Var> {
        encode_spans(
            &mut self.graph,
            &self.model.params,
            self.embeddings,
            spans,
            &self.model.slot_encoder,
        )
    }

    /// Action logits `[1, N]` for candidate spans.
    pub fn action_logits(&mut self, spans: &[Span]) -> Result<Var> {
        Ok(self.action_logits_traced(spans)?.0)
    }

    /// Action logits together with the candidates' attention output.
    pub fn action_logits_traced(&mut self, spans: &[Span]) -> Result<(Var, Attended)> {
        let e_a = self.span_embeddings(spans)?;
        let store = &self.model.params;
        let att = multi_head_slf_attention(&mut self.graph, store, e_a, self.e_s, &self.model.attn_action)?;
        let logits =
            heads::action_logits(&mut self.graph, store, &self.model.action, e_a, att.summary)?;
        Ok((logits, att))
    }

    /// Location pointer logits `[L + 1, 1]` for an action encoding `e_a` (`[d, 1]`).
    pub fn location_logits(&mut self, e_a: Var) -> Result<Var> {
        let s = self.type_summaries()?;
        heads::location_logits(
            &mut self.graph,
            &self.model.params,
            &self.model.location,
            self.e_s,
            e_a,
            s.location.summary,
        )
    }

    /// `E_L`: the slot encoding of the location span, or the location sentinel if empty.
    pub fn location_value(&mut self, location: Option<Span>) -> Result<Var> {
        match location {
            Some(span) => self.span_embeddings(&[span]),
            None => Ok(self.graph.param(&self.model.params, self.model.location.nil)),
        }
    }

    /// Object pointer logits `[L + 1, 1]`.
    pub fn object_logits(&mut self, e_a: Var, e_l: Var) -> Result<Var> {
        let s = self.type_summaries()?;
        heads::object_logits(
            &mut self.graph,
            &self.model.params,
            &self.model.object,
            self.e_s,
            e_a,
            e_l,
            s.object.summary,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InteractionMode;
    use alloc::string::ToString;

    #[test]
    fn encoders_do_not_share_parameters() {
        let model = Model::new(TrainConfig::default(), Vocab::new(["a"])).unwrap();
        let nlc = model.nlc_encoder.param_ids();
        for id in model.slot_encoder.param_ids() {
            assert!(!nlc.contains(&id));
        }
        for id in &nlc {
            assert!(model.params.name(*id).starts_with("nlc_encoder."));
        }
        for id in model.slot_encoder.param_ids() {
            assert!(model.params.name(id).starts_with("slot_encoder."));
        }
    }

    #[test]
    fn parameter_groups_cover_store_once() {
        for interaction in [InteractionMode::Learned, InteractionMode::Passthrough] {
            let cfg = TrainConfig {
                interaction,
                ..TrainConfig::default()
            };
            let model = Model::new(cfg, Vocab::new(["a"])).unwrap();
            let mut all: Vec<usize> = model
                .parameter_groups()
                .into_iter()
                .flat_map(|(_, ids)| ids.into_iter().map(ParamId::index))
                .collect();
            all.sort_unstable();
            let want: Vec<usize> = (0..model.params.len()).collect();
            assert_eq!(all, want);
        }
    }

    #[test]
    fn from_parts_rejects_bad_shapes() {
        let model = Model::new(TrainConfig::default(), Vocab::new(["a"])).unwrap();
        let mut tensors: Vec<(String, Tensor)> = model
            .params
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.clone()))
            .collect();
        let rebuilt =
            Model::from_parts(model.config.clone(), model.vocab.clone(), tensors.clone()).unwrap();
        assert_eq!(rebuilt.params, model.params);
        tensors[3].1 = Tensor::zeros(&[1, 1]);
        let name = tensors[3].0.clone();
        let err = Model::from_parts(model.config.clone(), model.vocab.clone(), tensors)
            .unwrap_err()
            .to_string();
        assert!(err.contains(&name), "{err}");
    }
}
