use slfnet_core::decoder::{decode, HeadCall};
use slfnet_core::encoders::Vocab;
use slfnet_core::gradcheck::{grad_check, GradCheckConfig};
use slfnet_core::heads::enumerate_action_candidates;
use slfnet_core::loss::compute_loss;
use slfnet_core::{Model, NlcExample, ParamStore, SlfGroup, Span, TrainConfig};

fn example(tokens: &[&str], heads: &[usize], groups: Vec<SlfGroup>) -> NlcExample {
    NlcExample {
        id: "t".into(),
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        dep_heads: heads.to_vec(),
        groups,
    }
}

fn group(a: (usize, usize), l: Option<(usize, usize)>, o: Option<(usize, usize)>) -> SlfGroup {
    SlfGroup {
        action: Span::new(a.0, a.1),
        location: l.map(|(s, e)| Span::new(s, e)),
        object: o.map(|(s, e)| Span::new(s, e)),
    }
}

/// `turn on the light`, one group, no location.
fn four_tokens() -> NlcExample {
    example(&["turn", "on", "the", "light"], &[0, 0, 3, 0], vec![group((0, 1), None, Some((3, 3)))])
}

/// Two groups with a location in the first.
fn two_groups() -> NlcExample {
    example(
        &["open", "the", "door", "in", "the", "hall", "and", "stop", "the", "fan"],
        &[0, 2, 0, 5, 5, 0, 0, 0, 9, 7],
        vec![group((0, 0), Some((5, 5)), Some((2, 2))), group((7, 7), None, Some((9, 9)))],
    )
}

fn model_for(ex: &NlcExample, cfg: TrainConfig) -> Model {
    Model::new(cfg, Vocab::from_examples(std::slice::from_ref(ex))).unwrap()
}

fn small(seed: u64) -> TrainConfig {
    TrainConfig {
        d: 8,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let ex = four_tokens();
    let model = model_for(&ex, small(7));
    let f = |store: &ParamStore| {
        let mut m = model.clone();
        m.params = store.clone();
        let out = compute_loss(&ex, &m)?;
        Ok((out.graph, out.loss))
    };
    let report = grad_check(&model.params, f, &GradCheckConfig::new(1e-3, 1e-4)).unwrap();
    assert_eq!(report.params.len(), model.params.len());
    for (group, ids) in model.parameter_groups() {
        for id in ids {
            let p = &report.params[id.index()];
            assert!(p.failures == 0, "{group}: {p:?}");
        }
    }
}

fn ln_softmax_at(logits: &[f64], i: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
    logits[i] - m - z.ln()
}

/// KL(target || softmax(logits)) by direct summation.
fn kl(logits: &[f64], target: &[f64]) -> f64 {
    target
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .map(|(i, &t)| t * (t.ln() - ln_softmax_at(logits, i)))
        .sum()
}

fn pointer_target(len: usize, span: Option<Span>) -> Vec<f64> {
    let mut t = vec![0.0; len + 1];
    match span {
        Some(s) => (s.start..=s.end).for_each(|i| t[i] = 1.0 / s.len() as f64),
        None => t[len] = 1.0,
    }
    t
}

/// Re-evaluate the four loss terms from raw head outputs.
fn oracle_terms(ex: &NlcExample, m: &Model) -> [f64; 4] {
    let cfg = &m.config;
    let mut fwd = m.forward(&ex.tokens, &ex.dep_heads).unwrap();
    let len = ex.tokens.len();
    let count_logits = fwd.group_count_logits().unwrap();
    let count = -ln_softmax_at(fwd.graph.value(count_logits).data(), ex.groups.len());

    let cands = enumerate_action_candidates(len, cfg.max_span);
    let a_logits = fwd.action_logits(&cands).unwrap();
    let z = fwd.graph.value(a_logits).data().to_vec();
    let mut bce = 0.0;
    for (c, zi) in cands.iter().zip(&z) {
        let p = 1.0 / (1.0 + (-zi).exp());
        let y = ex.groups.iter().any(|g| g.action == *c);
        bce -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    let action = bce / cands.len() as f64;

    let (mut loc, mut obj) = (0.0, 0.0);
    for g in &ex.groups {
        let e_a = fwd.span_embeddings(&[g.action]).unwrap();
        let l = fwd.location_logits(e_a).unwrap();
        loc += kl(fwd.graph.value(l).data(), &pointer_target(len, g.location));
        let e_l = fwd.location_value(g.location).unwrap();
        let o = fwd.object_logits(e_a, e_l).unwrap();
        obj += kl(fwd.graph.value(o).data(), &pointer_target(len, g.object));
    }
    [count, action, loc, obj]
}

#[test]
fn loss_matches_independent_four_term_sum() {
    for ex in [four_tokens(), two_groups()] {
        for seed in 0..4 {
            let cfg = TrainConfig {
                lambda_count: 0.7,
                lambda_action: 1.3,
                lambda_loc: 0.4,
                lambda_obj: 2.0,
                ..small(seed)
            };
            let m = model_for(&ex, cfg.clone());
            let out = compute_loss(&ex, &m).unwrap();
            let [c, a, l, o] = oracle_terms(&ex, &m);
            let expected =
                cfg.lambda_count * c + cfg.lambda_action * a + cfg.lambda_loc * l + cfg.lambda_obj * o;
            let got = out.value();
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
            for (x, y) in [(out.terms.count, c), (out.terms.action, a), (out.terms.location, l), (out.terms.object, o)] {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn zero_weights_give_zero_loss_and_gradient() {
    let ex = two_groups();
    let cfg = TrainConfig {
        lambda_count: 0.0,
        lambda_action: 0.0,
        lambda_loc: 0.0,
        lambda_obj: 0.0,
        ..small(1)
    };
    let m = model_for(&ex, cfg);
    let out = compute_loss(&ex, &m).unwrap();
    assert_eq!(out.value(), 0.0);
    let grads = out.graph.backward(out.loss, &m.params).unwrap();
    assert!(grads.iter().all(|(_, g)| g.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn single_weight_selects_single_term() {
    let ex = two_groups();
    let full = compute_loss(&ex, &model_for(&ex, small(3))).unwrap().terms;
    let only_obj = TrainConfig {
        lambda_count: 0.0,
        lambda_action: 0.0,
        lambda_loc: 0.0,
        ..small(3)
    };
    let out = compute_loss(&ex, &model_for(&ex, only_obj)).unwrap();
    assert_eq!(out.value(), full.object);
}

#[test]
fn pointer_terms_are_teacher_forced() {
    let ex = two_groups();
    let m = model_for(&ex, small(5));
    let before = compute_loss(&ex, &m).unwrap().terms;
    let mut shifted = m.clone();
    for id in [m.action.w_out, m.action.w_a, m.count.w1] {
        for (i, v) in shifted.params.get_mut(id).data_mut().iter_mut().enumerate() {
            *v += 0.37 * (i % 3) as f64;
        }
    }
    let after = compute_loss(&ex, &shifted).unwrap().terms;
    assert_ne!(before.action, after.action);
    assert_ne!(before.count, after.count);
    assert_eq!(before.location.to_bits(), after.location.to_bits());
    assert_eq!(before.object.to_bits(), after.object.to_bits());
}

#[test]
fn decode_is_deterministic_and_ordered() {
    let ex = two_groups();
    for seed in 0..6 {
        let m = model_for(&ex, small(seed));
        let a = decode(&ex.tokens, &ex.dep_heads, &m).unwrap();
        let b = decode(&ex.tokens, &ex.dep_heads, &m).unwrap();
        assert_eq!(a, b);
        let calls = &a.trace.calls;
        assert!(matches!(calls[0], HeadCall::GroupCount { .. }));
        if a.trace.predicted_k == 0 {
            assert_eq!(calls.len(), 1);
            assert!(a.groups.is_empty());
            continue;
        }
        assert!(matches!(calls[1], HeadCall::Actions { .. }));
        let mut expected = 1;
        for pair in calls[2..].chunks(2) {
            assert!(matches!(pair[0], HeadCall::Location { group, .. } if group == expected));
            assert!(matches!(pair[1], HeadCall::Object { group, .. } if group == expected));
            expected += 1;
        }
        assert_eq!(a.k, a.groups.len());
        let starts: Vec<usize> = a.groups.iter().map(|g| g.action.start).collect();
        assert!(starts.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn pointer_distributions_in_trace_are_normalized() {
    let ex = two_groups();
    let m = model_for(&ex, small(2));
    let parse = decode(&ex.tokens, &ex.dep_heads, &m).unwrap();
    for call in &parse.trace.calls {
        let probs = match call {
            HeadCall::GroupCount { probs } => probs,
            HeadCall::Location { probs, .. } | HeadCall::Object { probs, .. } => {
                assert_eq!(probs.len(), ex.tokens.len() + 1);
                probs
            }
            HeadCall::Actions { scores, .. } => {
                assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
                continue;
            }
        };
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn groups_do_not_see_later_groups() {
    // Group 1's location/object distributions are computed before group 2
    // exists, so they match a decode in which only group 1's action is scored.
    let ex = two_groups();
    let m = model_for(&ex, small(4));
    let mut fwd = m.forward(&ex.tokens, &ex.dep_heads).unwrap();
    let parse = decode(&ex.tokens, &ex.dep_heads, &m).unwrap();
    let Some(HeadCall::Location { group: 1, probs, .. }) = parse.trace.calls.get(2) else {
        return;
    };
    let first = parse.groups[0].action;
    let direct = slfnet_core::heads::score_location_positions(&mut fwd, first).unwrap();
    assert_eq!(direct.data(), probs.as_slice());
}
