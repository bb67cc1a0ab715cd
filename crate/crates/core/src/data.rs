//! Dataset records, their invariants, and the seeded 6:2:2 split.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Inclusive token range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn positions(&self) -> core::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// One Action/Location/Object group. Location and object may be empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlfGroup {
    pub action: Span,
    pub location: Option<Span>,
    pub object: Option<Span>,
}

/// A tokenized command with its dependency heads and gold groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlcExample {
    pub id: String,
    pub tokens: Vec<String>,
    /// Parent index per token; the root points at itself.
    pub dep_heads: Vec<usize>,
    pub groups: Vec<SlfGroup>,
}

impl NlcExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Check every record invariant. The message names the offending field.
    pub fn validate(&self, k_max: usize) -> Result<()> {
        let n = self.tokens.len();
        let fail = |field: &str, msg: String| {
            Err(Error::Data(alloc::format!("field `{field}`: {msg}")))
        };
        if n == 0 {
            return fail("tokens", "empty token list".into());
        }
        if self.dep_heads.len() != n {
            return fail(
                "dep_heads",
                alloc::format!("{} heads for {} tokens", self.dep_heads.len(), n),
            );
        }
        validate_heads(&self.dep_heads).map_err(|e| match e {
            Error::Data(msg) => Error::Data(alloc::format!("field `dep_heads`: {msg}")),
            other => other,
        })?;
        if self.groups.len() > k_max {
            return fail(
                "groups",
                alloc::format!("{} groups exceed the maximum of {k_max}", self.groups.len()),
            );
        }
        for (g, group) in self.groups.iter().enumerate() {
            let slots = [
                ("action", Some(group.action)),
                ("location", group.location),
                ("object", group.object),
            ];
            for (name, span) in slots {
                if let Some(s) = span {
                    if s.start > s.end || s.end >= n {
                        return fail(
                            "groups",
                            alloc::format!(
                                "group {g} {name} span [{}, {}] outside [0, {n})",
                                s.start,
                                s.end
                            ),
                        );
                    }
                }
            }
        }
        for (i, a) in self.groups.iter().enumerate() {
            for b in &self.groups[i + 1..] {
                if a.action.overlaps(&b.action) {
                    return fail(
                        "groups",
                        alloc::format!(
                            "action spans [{}, {}] and [{}, {}] overlap",
                            a.action.start,
                            a.action.end,
                            b.action.start,
                            b.action.end
                        ),
                    );
                }
            }
        }
        Ok(())
    }
}

/// Dependency heads must stay in range and form a tree with exactly one
/// self-looping root.
pub fn validate_heads(heads: &[usize]) -> Result<()> {
    let n = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        if h >= n {
            return Err(Error::Data(alloc::format!(
                "token {i} has head {h}, outside [0, {n})"
            )));
        }
    }
    let roots: Vec<usize> = (0..n).filter(|&i| heads[i] == i).collect();
    if roots.len() != 1 {
        return Err(Error::Data(alloc::format!(
            "expected exactly one root, found {} ({:?})",
            roots.len(),
            roots
        )));
    }
    // every token must reach the root without revisiting a node
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while heads[cur] != cur {
            cur = heads[cur];
            steps += 1;
            if steps > n {
                return Err(Error::Data(alloc::format!(
                    "token {start} is on a dependency cycle"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<NlcExample>,
    pub dev: Vec<NlcExample>,
    pub test: Vec<NlcExample>,
}

/// Seeded 6:2:2 split. Examples are first ordered by id so the partition only
/// depends on the ids and the seed; dev and test get `floor(n/5)` each and the
/// remainder goes to train.
pub fn split_dataset(examples: &[NlcExample], seed: u64) -> Result<Split> {
    let n = examples.len();
    if n < 5 {
        return Err(Error::Domain(alloc::format!(
            "need at least 5 examples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| examples[a].id.cmp(&examples[b].id).then(a.cmp(&b)));
    XorShift64Star::derived(seed, 0x5_911).shuffle(&mut order);
    let held = n / 5;
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect();
    Ok(Split {
        dev: pick(&order[..held]),
        test: pick(&order[held..2 * held]),
        train: pick(&order[2 * held..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn example(id: &str) -> NlcExample {
        NlcExample {
            id: id.to_string(),
            tokens: vec!["open".into(), "the".into(), "door".into()],
            dep_heads: vec![0, 2, 0],
            groups: vec![SlfGroup {
                action: Span::new(0, 0),
                location: None,
                object: Some(Span::new(2, 2)),
            }],
        }
    }

    #[test]
    fn valid_example_passes() {
        example("a").validate(3).unwrap();
    }

    #[test]
    fn head_out_of_range() {
        let mut e = example("a");
        e.dep_heads[1] = 3;
        let err = e.validate(3).unwrap_err().to_string();
        assert!(err.contains("dep_heads") && err.contains("token 1"), "{err}");
    }

    #[test]
    fn root_count_enforced() {
        let mut e = example("a");
        e.dep_heads = vec![0, 1, 0];
        assert!(e.validate(3).is_err());
        e.dep_heads = vec![2, 0, 1];
        assert!(e.validate(3).is_err());
    }

    #[test]
    fn overlapping_actions_rejected() {
        let mut e = example("a");
        e.groups.push(SlfGroup {
            action: Span::new(0, 1),
            location: None,
            object: None,
        });
        let err = e.validate(3).unwrap_err().to_string();
        assert!(err.contains("overlap"), "{err}");
    }

    #[test]
    fn too_many_groups_rejected() {
        let e = example("a");
        assert!(e.validate(0).is_err());
    }

    #[test]
    fn split_sizes() {
        let ten: Vec<_> = (0..10).map(|i| example(&alloc::format!("e{i}"))).collect();
        let s = split_dataset(&ten, 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (6, 2, 2));
        let eleven: Vec<_> = (0..11).map(|i| example(&alloc::format!("e{i}"))).collect();
        let s = split_dataset(&eleven, 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (7, 2, 2));
        assert!(split_dataset(&ten[..4], 1).is_err());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let items: Vec<_> = (0..23).map(|i| example(&alloc::format!("e{i:02}"))).collect();
        let a = split_dataset(&items, 9).unwrap();
        assert_eq!(a, split_dataset(&items, 9).unwrap());
        let mut ids: Vec<String> = a
            .train
            .iter()
            .chain(&a.dev)
            .chain(&a.test)
            .map(|e| e.id.clone())
            .collect();
        ids.sort();
        let mut want: Vec<String> = items.iter().map(|e| e.id.clone()).collect();
        want.sort();
        assert_eq!(ids, want);
        // input order does not matter
        let mut reversed = items.clone();
        reversed.reverse();
        assert_eq!(a, split_dataset(&reversed, 9).unwrap());
    }
}
