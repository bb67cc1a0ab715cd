use slfnet_core::encoders::Vocab;
use slfnet_core::loss::compute_loss;
use slfnet_core::synth::{generate_synthetic, GrammarConfig};
use slfnet_core::train::{train, train_model, EpochLog};
use slfnet_core::{Error, Model, TrainConfig};

fn corpus(n: usize) -> Vec<slfnet_core::NlcExample> {
    generate_synthetic(&GrammarConfig::default(), n).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = corpus(6);
    let cfg = TrainConfig {
        d: 8,
        epochs: 3,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let model = Model::new(cfg, Vocab::from_examples(&data)).unwrap();
    let out = train_model(model.clone(), &data, &data[..2], |_| {}).unwrap();
    assert_eq!(out.last.params, model.params);
    let losses: Vec<f64> = out.log.iter().map(|l| l.loss).collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn training_loss_falls_tenfold_on_a_small_corpus() {
    let data = corpus(16);
    let cfg = TrainConfig {
        epochs: 300,
        learning_rate: 0.002,
        ..TrainConfig::default()
    };
    let out = train(&data, &[], cfg, |_| {}).unwrap();
    let first = out.log[0].loss;
    let best = out.log.iter().map(|l| l.loss).fold(f64::INFINITY, f64::min);
    assert!(best * 10.0 <= first, "first {first}, best {best}");
}

#[test]
fn training_is_deterministic() {
    let data = corpus(12);
    let cfg = TrainConfig {
        d: 8,
        epochs: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut log: Vec<EpochLog> = Vec::new();
        let out = train(&data[..8], &data[8..], cfg.clone(), |e| log.push(e.clone())).unwrap();
        (log, out.best.params)
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_loss_is_reported_as_divergence() {
    let data = corpus(4);
    let cfg = TrainConfig {
        d: 8,
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut model = Model::new(cfg, Vocab::from_examples(&data)).unwrap();
    let w1 = model.count.w1;
    model.params.get_mut(w1).data_mut()[0] = f64::NAN;
    assert!(compute_loss(&data[0], &model).unwrap().value().is_nan());
    match train_model(model, &data, &[], |_| {}) {
        Err(Error::Divergence { epoch: 1, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn empty_training_split_is_rejected() {
    let data = corpus(2);
    let err = train(&[], &data, TrainConfig::default(), |_| {}).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
}
