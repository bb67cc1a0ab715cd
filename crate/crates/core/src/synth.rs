//! Template grammar for synthetic commands such as
//! `turn on the light in the kitchen and then open the door`.
//!
//! Every group is `<action> [the <object>] [in the <location>]`; groups are
//! joined by connector words. Dependency heads follow fixed rules: the first
//! action word of group 1 is the root, object/location head words (the last
//! word of their phrase) attach to their group's action head, determiners,
//! prepositions and other phrase words attach to their phrase head, and
//! connectors plus later action heads attach to the previous action head.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{NlcExample, SlfGroup, Span};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrammarConfig {
    pub actions: Vec<String>,
    pub objects: Vec<String>,
    pub locations: Vec<String>,
    /// Relative weights of k = 1, 2, ..., len.
    pub k_weights: Vec<f64>,
    pub p_omit_location: f64,
    pub p_omit_object: f64,
    pub connectors: Vec<String>,
    /// Draw each command's action phrases without replacement. Groups whose
    /// action words coincide cannot be told apart by the slot pointers.
    pub distinct_actions: bool,
    pub seed: u64,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            actions: words(&[
                "turn on", "turn off", "open", "close", "clean", "check", "switch on",
                "switch off", "lock", "unlock", "start", "stop",
            ]),
            objects: words(&[
                "light", "door", "window", "fan", "heater", "coffee machine", "television",
                "air conditioner", "oven", "curtains", "washing machine", "speaker",
            ]),
            locations: words(&[
                "kitchen", "bedroom", "living room", "garage", "bathroom", "office",
                "dining room", "hallway", "basement", "garden",
            ]),
            k_weights: vec![0.4, 0.35, 0.25],
            p_omit_location: 0.4,
            p_omit_object: 0.0,
            connectors: words(&["and", "then", "and then"]),
            distinct_actions: true,
            seed: 7,
        }
    }
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(alloc::format!("grammar: {msg}")));
        for (name, list) in [
            ("actions", &self.actions),
            ("objects", &self.objects),
            ("locations", &self.locations),
            ("connectors", &self.connectors),
        ] {
            if list.is_empty() {
                return fail(alloc::format!("{name} list is empty"));
            }
            if list.iter().any(|p| p.split_whitespace().next().is_none()) {
                return fail(alloc::format!("{name} contains an empty phrase"));
            }
        }
        for (name, p) in [
            ("p_omit_location", self.p_omit_location),
            ("p_omit_object", self.p_omit_object),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(alloc::format!("{name} = {p} is not a probability"));
            }
        }
        if self.k_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || !(self.k_weights.iter().sum::<f64>() > 0.0)
        {
            return fail("k_weights must be non-negative with a positive sum".into());
        }
        if self.distinct_actions && self.actions.len() < self.k_max() {
            return fail(alloc::format!(
                "distinct_actions needs at least {} action phrases, found {}",
                self.k_max(),
                self.actions.len()
            ));
        }
        Ok(())
    }

    /// Largest group count this grammar can produce.
    pub fn k_max(&self) -> usize {
        self.k_weights.len()
    }
}

struct Builder {
    tokens: Vec<String>,
    heads: Vec<usize>,
}

impl Builder {
    /// Append a phrase whose words all attach to `head_word` (an index within
    /// the phrase) and whose head word attaches to `parent`, or to itself
    /// when `parent` is `None`. Returns the phrase span and head position.
    fn phrase(&mut self, phrase: &str, head_word: HeadWord, parent: Option<usize>) -> (Span, usize) {
        let ws: Vec<&str> = phrase.split_whitespace().collect();
        let start = self.tokens.len();
        let head = match head_word {
            HeadWord::First => start,
            HeadWord::Last => start + ws.len() - 1,
        };
        for (i, w) in ws.iter().enumerate() {
            let pos = start + i;
            self.tokens.push(w.to_string());
            self.heads.push(if pos == head { parent.unwrap_or(head) } else { head });
        }
        (Span::new(start, start + ws.len() - 1), head)
    }

    /// Function words attached to a head that is not yet known.
    fn function_words(&mut self, ws: &[&str]) -> Vec<usize> {
        ws.iter()
            .map(|w| {
                self.tokens.push(w.to_string());
                self.heads.push(usize::MAX);
                self.tokens.len() - 1
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum HeadWord {
    First,
    Last,
}

/// Generate `n` examples from `config`. Identical configs give identical output.
pub fn generate_synthetic(config: &GrammarConfig, n: usize) -> Result<Vec<NlcExample>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Domain("cannot generate zero examples".into()));
    }
    let mut rng = XorShift64Star::new(config.seed);
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let k = 1 + rng.weighted(&config.k_weights);
        let mut b = Builder {
            tokens: Vec::new(),
            heads: Vec::new(),
        };
        let mut groups = Vec::with_capacity(k);
        let mut prev_action: Option<usize> = None;
        let mut used: Vec<usize> = Vec::with_capacity(k);
        for _ in 0..k {
            if let Some(prev) = prev_action {
                let c = &config.connectors[rng.below(config.connectors.len())];
                let ws: Vec<&str> = c.split_whitespace().collect();
                for pos in b.function_words(&ws) {
                    b.heads[pos] = prev;
                }
            }
            let action_idx = if config.distinct_actions {
                // the j-th action phrase not used yet in this command
                let j = rng.below(config.actions.len() - used.len());
                (0..config.actions.len())
                    .filter(|i| !used.contains(i))
                    .nth(j)
                    .expect("validated: enough action phrases")
            } else {
                rng.below(config.actions.len())
            };
            used.push(action_idx);
            let action = &config.actions[action_idx];
            let (action_span, action_head) = b.phrase(action, HeadWord::First, prev_action);
            prev_action = Some(action_head);

            let omit_object = rng.next_f64() < config.p_omit_object;
            let omit_location = rng.next_f64() < config.p_omit_location;
            let object = if omit_object {
                None
            } else {
                let det = b.function_words(&["the"]);
                let phrase = &config.objects[rng.below(config.objects.len())];
                let (span, head) = b.phrase(phrase, HeadWord::Last, Some(action_head));
                for pos in det {
                    b.heads[pos] = head;
                }
                Some(span)
            };
            let location = if omit_location {
                None
            } else {
                let func = b.function_words(&["in", "the"]);
                let phrase = &config.locations[rng.below(config.locations.len())];
                let (span, head) = b.phrase(phrase, HeadWord::Last, Some(action_head));
                for pos in func {
                    b.heads[pos] = head;
                }
                Some(span)
            };
            groups.push(SlfGroup {
                action: action_span,
                location,
                object,
            });
        }
        out.push(NlcExample {
            id: alloc::format!("syn-{}-{idx:06}", config.seed),
            tokens: b.tokens,
            dep_heads: b.heads,
            groups,
        });
    }
    Ok(out)
}
