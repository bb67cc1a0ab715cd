//! Command accuracy and slot-level precision, recall and F-score.
//!
//! A command is correct when the multiset of its (action, location, object)
//! token triples equals the gold multiset, so group order never matters.
//! Slot counts compare multisets of `(slot type, span)` pairs; empty
//! location/object slots are not slot values and are not counted.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{NlcExample, SlfGroup, Span};
use crate::decoder::decode_example;
use crate::error::Result;
use crate::model::Model;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Correct commands.
    #[serde(rename = "C")]
    pub correct: usize,
    /// All commands.
    #[serde(rename = "T")]
    pub total: usize,
    #[serde(rename = "L_correct")]
    pub slots_correct: usize,
    #[serde(rename = "P_pred")]
    pub slots_predicted: usize,
    #[serde(rename = "R_gold")]
    pub slots_gold: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(
        correct: usize,
        total: usize,
        slots_correct: usize,
        slots_predicted: usize,
        slots_gold: usize,
    ) -> Self {
        let precision = ratio(slots_correct, slots_predicted);
        let recall = ratio(slots_correct, slots_gold);
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            accuracy: ratio(correct, total),
            precision,
            recall,
            f_score,
            correct,
            total,
            slots_correct,
            slots_predicted,
            slots_gold,
        }
    }
}

/// Per-command counts used to build a [`MetricsReport`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseCounts {
    pub exact: bool,
    pub slots_correct: usize,
    pub slots_predicted: usize,
    pub slots_gold: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum SlotType {
    Action,
    Location,
    Object,
}

type Triple = (String, Option<String>, Option<String>);

fn triples(groups: &[SlfGroup], tokens: &[String]) -> Vec<Triple> {
    let text = |s: Span| tokens[s.start..=s.end].join(" ");
    let mut out: Vec<Triple> = groups
        .iter()
        .map(|g| (text(g.action), g.location.map(text), g.object.map(text)))
        .collect();
    out.sort();
    out
}

fn slots(groups: &[SlfGroup]) -> Vec<(SlotType, Span)> {
    let mut out = Vec::new();
    for g in groups {
        out.push((SlotType::Action, g.action));
        if let Some(l) = g.location {
            out.push((SlotType::Location, l));
        }
        if let Some(o) = g.object {
            out.push((SlotType::Object, o));
        }
    }
    out.sort();
    out
}

/// Size of the multiset intersection of two sorted lists.
fn sorted_intersection<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

pub fn score_parse(predicted: &[SlfGroup], gold: &[SlfGroup], tokens: &[String]) -> ParseCounts {
    let (ps, gs) = (slots(predicted), slots(gold));
    ParseCounts {
        exact: triples(predicted, tokens) == triples(gold, tokens),
        slots_correct: sorted_intersection(&ps, &gs),
        slots_predicted: ps.len(),
        slots_gold: gs.len(),
    }
}

pub fn aggregate<I: IntoIterator<Item = ParseCounts>>(counts: I) -> MetricsReport {
    let (mut c, mut t, mut l, mut p, mut r) = (0, 0, 0, 0, 0);
    for pc in counts {
        t += 1;
        c += pc.exact as usize;
        l += pc.slots_correct;
        p += pc.slots_predicted;
        r += pc.slots_gold;
    }
    MetricsReport::from_counts(c, t, l, p, r)
}

/// Decode every example and score it against its gold groups.
pub fn evaluate(model: &Model, dataset: &[NlcExample]) -> Result<MetricsReport> {
    let mut counts = Vec::with_capacity(dataset.len());
    for ex in dataset {
        let parse = decode_example(ex, model)?;
        counts.push(score_parse(&parse.groups, &ex.groups, &ex.tokens));
    }
    Ok(aggregate(counts))
}
