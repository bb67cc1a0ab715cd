//! Semantic probability graph and decoding.
//!
//! For `k` groups the graph has the NLC node plus `Action_g`, `Location_g`
//! and `Object_g` for each group, with edges `NLC -> every slot`,
//! `Action_g -> Location_g`, `Action_g -> Object_g` and
//! `Location_g -> Object_g`. There are no edges between groups. Decoding
//! predicts `k`, selects all `k` actions at once, then visits
//! `L_1, O_1, L_2, O_2, ...` in order.

use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;

use crate::data::{NlcExample, SlfGroup, Span};
use crate::error::{Error, Result};
use crate::heads::{
    argmax, enumerate_action_candidates, predict_group_count, score_location_positions,
    score_object_positions,
};
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Nlc,
    /// Group index, starting at 1.
    Action(usize),
    Location(usize),
    Object(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticProbGraph {
    pub k: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<(Node, Node)>,
}

/// Instantiate the per-group edge template for `k` groups.
pub fn build_graph(k: usize, k_max: usize) -> Result<SemanticProbGraph> {
    if k > k_max {
        return Err(Error::Domain(alloc::format!(
            "group count {k} exceeds the maximum of {k_max}"
        )));
    }
    let mut nodes = alloc::vec![Node::Nlc];
    let mut edges = Vec::new();
    for g in 1..=k {
        let (a, l, o) = (Node::Action(g), Node::Location(g), Node::Object(g));
        nodes.extend([a, l, o]);
        edges.extend([
            (Node::Nlc, a),
            (Node::Nlc, l),
            (Node::Nlc, o),
            (a, l),
            (a, o),
            (l, o),
        ]);
    }
    Ok(SemanticProbGraph { k, nodes, edges })
}

impl SemanticProbGraph {
    pub fn parents(&self, node: Node) -> Vec<Node> {
        self.edges
            .iter()
            .filter(|(_, to)| *to == node)
            .map(|(from, _)| *from)
            .collect()
    }

    /// Decoding schedule: all actions, then `L_g, O_g` group by group. Every
    /// node appears after all of its parents.
    pub fn schedule(&self) -> Vec<Node> {
        let mut order: Vec<Node> = (1..=self.k).map(Node::Action).collect();
        for g in 1..=self.k {
            order.push(Node::Location(g));
            order.push(Node::Object(g));
        }
        order
    }

    /// Kahn's algorithm; `true` when every node can be ordered.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: Vec<usize> = self.nodes.iter().map(|n| self.parents(*n).len()).collect();
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = ready.pop() {
            visited += 1;
            for (from, to) in &self.edges {
                if *from == self.nodes[i] {
                    let j = self.nodes.iter().position(|n| n == to).expect("edge target");
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        visited == self.nodes.len()
    }
}

/// Turn a pointer distribution over `L` tokens plus a sentinel into a span.
///
/// If the sentinel wins the slot is empty. Otherwise the span grows left and
/// right from the best token while the neighbour's probability is at least
/// `beta` times the anchor's.
pub fn span_from_distribution(probs: &[f64], beta: f64) -> Option<Span> {
    let len = probs.len().checked_sub(1)?;
    if len == 0 || argmax(probs) == len {
        return None;
    }
    let anchor = argmax(&probs[..len]);
    let threshold = beta * probs[anchor];
    let mut start = anchor;
    while start > 0 && probs[start - 1] >= threshold {
        start -= 1;
    }
    let mut end = anchor;
    while end + 1 < len && probs[end + 1] >= threshold {
        end += 1;
    }
    Some(Span::new(start, end))
}

/// One recorded head invocation.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum HeadCall {
    GroupCount {
        probs: Vec<f64>,
    },
    Actions {
        candidates: Vec<Span>,
        scores: Vec<f64>,
        selected: Vec<Span>,
    },
    Location {
        group: usize,
        probs: Vec<f64>,
        span: Option<Span>,
    },
    Object {
        group: usize,
        probs: Vec<f64>,
        span: Option<Span>,
    },
}

/// Distributions and attention weights recorded while decoding one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DecodeTrace {
    /// Head invocations in execution order.
    pub calls: Vec<HeadCall>,
    /// Per-head attention weights of the action, location and object type queries.
    pub type_attention: Vec<(String, Vec<Vec<f64>>)>,
    pub predicted_k: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlfParse {
    pub k: usize,
    pub groups: Vec<SlfGroup>,
    pub trace: DecodeTrace,
}

/// Pick up to `k` non-overlapping spans by descending score (ties to the
/// earlier candidate), then order them by start position.
pub fn select_actions(candidates: &[Span], scores: &[f64], k: usize) -> Vec<Span> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<Span> = Vec::with_capacity(k);
    for i in order {
        if chosen.len() == k {
            break;
        }
        let c = candidates[i];
        if chosen.iter().all(|s| !s.overlaps(&c)) {
            chosen.push(c);
        }
    }
    chosen.sort();
    chosen
}

/// Decode a tokenized command into a parse.
pub fn decode(tokens: &[String], dep_heads: &[usize], model: &Model) -> Result<SlfParse> {
    let mut fwd = model.forward(tokens, dep_heads)?;
    let mut trace = DecodeTrace::default();

    let (probs, k) = predict_group_count(&mut fwd)?;
    trace.predicted_k = k;
    trace.calls.push(HeadCall::GroupCount {
        probs: probs.into_data(),
    });
    let summaries = fwd.type_summaries()?;
    for (name, att) in [
        ("action", &summaries.action),
        ("location", &summaries.location),
        ("object", &summaries.object),
    ] {
        let heads = att
            .weights
            .iter()
            .map(|w| fwd.graph.value(*w).data().to_vec())
            .collect();
        trace.type_attention.push((name.into(), heads));
    }

    let graph = build_graph(k, model.config.k_max)?;
    let mut actions: Vec<Span> = Vec::new();
    let mut locations: Vec<Option<Span>> = Vec::new();
    for node in graph.schedule() {
        match node {
            Node::Action(1) => {
                let candidates = enumerate_action_candidates(fwd.len, model.config.max_span);
                let logits = fwd.action_logits(&candidates)?;
                let scores = crate::tensor::sigmoid(fwd.graph.value(logits)).into_data();
                actions = select_actions(&candidates, &scores, k);
                if actions.len() < k {
                    trace.warnings.push(alloc::format!(
                        "predicted {k} groups but only {} non-overlapping actions exist",
                        actions.len()
                    ));
                }
                trace.calls.push(HeadCall::Actions {
                    candidates,
                    scores,
                    selected: actions.clone(),
                });
            }
            Node::Action(_) => {}
            Node::Location(g) => {
                let Some(&action) = actions.get(g - 1) else { continue };
                let probs = score_location_positions(&mut fwd, action)?;
                let span = span_from_distribution(probs.data(), model.config.beta);
                locations.push(span);
                trace.calls.push(HeadCall::Location {
                    group: g,
                    probs: probs.into_data(),
                    span,
                });
            }
            Node::Object(g) => {
                let Some(&action) = actions.get(g - 1) else { continue };
                let location = locations[g - 1];
                let probs = score_object_positions(&mut fwd, action, location)?;
                let span = span_from_distribution(probs.data(), model.config.beta);
                trace.calls.push(HeadCall::Object {
                    group: g,
                    probs: probs.into_data(),
                    span,
                });
            }
            Node::Nlc => {}
        }
    }

    let groups: Vec<SlfGroup> = trace
        .calls
        .iter()
        .filter_map(|c| match c {
            HeadCall::Object { group, span, .. } => Some(SlfGroup {
                action: actions[group - 1],
                location: locations[group - 1],
                object: *span,
            }),
            _ => None,
        })
        .collect();
    Ok(SlfParse {
        k: groups.len(),
        groups,
        trace,
    })
}

/// Decode a dataset example (its gold groups are ignored).
pub fn decode_example(example: &NlcExample, model: &Model) -> Result<SlfParse> {
    decode(&example.tokens, &example.dep_heads, model)
}

fn span_text(tokens: &[String], span: Span) -> String {
    let joined = tokens[span.start..=span.end].join(" ");
    joined.replace('\\', "\\\\").replace('"', "\\\"")
}

/// One `ALO(...)` line per group; empty slots render as `NIL`.
pub fn render_slf(groups: &[SlfGroup], tokens: &[String]) -> String {
    let slot = |name: &str, g: usize, span: Option<Span>| match span {
        Some(s) => alloc::format!("{name}_{g}=\"{}\"", span_text(tokens, s)),
        None => alloc::format!("{name}_{g}=NIL"),
    };
    groups
        .iter()
        .enumerate()
        .map(|(i, grp)| {
            let g = i + 1;
            alloc::format!(
                "ALO({}, {}, {})",
                slot("action_name", g, Some(grp.action)),
                slot("location_name", g, grp.location),
                slot("object_name", g, grp.object)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn graph_shapes() {
        let g0 = build_graph(0, 3).unwrap();
        assert_eq!(g0.nodes, vec![Node::Nlc]);
        assert!(g0.edges.is_empty());

        let g1 = build_graph(1, 3).unwrap();
        assert_eq!(g1.nodes.len(), 4);
        assert_eq!(g1.edges.len(), 6);
        assert_eq!(
            g1.parents(Node::Location(1)),
            vec![Node::Nlc, Node::Action(1)]
        );
        assert_eq!(
            g1.parents(Node::Object(1)),
            vec![Node::Nlc, Node::Action(1), Node::Location(1)]
        );
        assert!(build_graph(4, 3).is_err());
    }

    #[test]
    fn groups_are_independent() {
        let g = build_graph(2, 3).unwrap();
        assert!(g.is_acyclic());
        let group_of = |n: Node| match n {
            Node::Nlc => 0,
            Node::Action(g) | Node::Location(g) | Node::Object(g) => g,
        };
        for (from, to) in &g.edges {
            if *from != Node::Nlc {
                assert_eq!(group_of(*from), group_of(*to));
            }
        }
    }

    #[test]
    fn schedule_respects_parents() {
        let g = build_graph(3, 3).unwrap();
        let order = g.schedule();
        for (i, node) in order.iter().enumerate() {
            for p in g.parents(*node) {
                if p != Node::Nlc {
                    let pi = order.iter().position(|n| *n == p).unwrap();
                    assert!(pi < i, "{p:?} must precede {node:?}");
                }
            }
        }
    }

    #[test]
    fn span_extraction_cases() {
        assert_eq!(span_from_distribution(&[0.0, 0.0, 0.0, 1.0], 0.5), None);
        assert_eq!(
            span_from_distribution(&[0.0, 0.0, 1.0, 0.0], 0.5),
            Some(Span::new(2, 2))
        );
        assert_eq!(
            span_from_distribution(&[0.05, 0.40, 0.35, 0.05, 0.15], 0.5),
            Some(Span::new(1, 2))
        );
    }

    #[test]
    fn greedy_selection() {
        let c = enumerate_action_candidates(4, 2);
        // [0,0] [0,1] [1,1] [1,2] [2,2] [2,3] [3,3]
        let scores = [0.2, 0.9, 0.1, 0.95, 0.3, 0.8, 0.8];
        assert_eq!(
            select_actions(&c, &scores, 2),
            vec![Span::new(1, 2), Span::new(3, 3)]
        );
        assert_eq!(select_actions(&c, &scores, 0), vec![]);
    }

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(|t| t.to_string()).collect()
    }

    #[test]
    fn render_formats() {
        let t = toks("turn on the light in the kitchen");
        assert_eq!(render_slf(&[], &t), "");
        let g = SlfGroup {
            action: Span::new(0, 1),
            location: Some(Span::new(6, 6)),
            object: Some(Span::new(3, 3)),
        };
        assert_eq!(
            render_slf(&[g.clone()], &t),
            r#"ALO(action_name_1="turn on", location_name_1="kitchen", object_name_1="light")"#
        );
        let g2 = SlfGroup {
            location: None,
            ..g
        };
        assert!(render_slf(&[g2], &t).contains("location_name_1=NIL"));
    }
}
