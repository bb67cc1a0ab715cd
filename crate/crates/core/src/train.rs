//! Per-example Adam training with a fixed, seeded example order.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::NlcExample;
use crate::encoders::Vocab;
use crate::error::{Error, Result};
use crate::loss::compute_loss;
use crate::metrics::{evaluate, MetricsReport};
use crate::model::Model;
use crate::params::{Gradients, ParamStore};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor;

const ORDER_STREAM: u64 = 0x0_4D3B;

/// Adam: per-parameter steps scaled by running first and second moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (id, g) in grads.iter() {
            let i = id.index();
            let p = store.get_mut(id).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_accuracy: f64,
    pub dev_f: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best dev accuracy (latest on ties).
    pub best: Model,
    pub best_epoch: usize,
    /// Parameters after the final epoch.
    pub last: Model,
    pub log: Vec<EpochLog>,
}

/// Train a fresh model whose vocabulary is built from `train`.
pub fn train(
    train: &[NlcExample],
    dev: &[NlcExample],
    config: TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let model = Model::new(config, Vocab::from_examples(train))?;
    train_model(model, train, dev, on_epoch)
}

/// Train `model` in place of a fresh initialization (e.g. with pretrained embeddings).
pub fn train_model(
    mut model: Model,
    train: &[NlcExample],
    dev: &[NlcExample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Domain("training split is empty".into()));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    for ex in train.iter().chain(dev) {
        ex.validate(cfg.k_max)?;
    }
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Model, usize, f64)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        XorShift64Star::derived(cfg.seed ^ ORDER_STREAM, epoch as u64).shuffle(&mut order);
        let mut losses = alloc::vec![0.0; train.len()];
        for &i in &order {
            let ex = &train[i];
            let out = compute_loss(ex, &model)?;
            let value = out.value();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    example: ex.id.clone(),
                });
            }
            losses[i] = value;
            let grads = out.graph.backward(out.loss, &model.params)?;
            adam.step(&mut model.params, &grads);
        }
        let dev_report = if dev.is_empty() {
            MetricsReport::default()
        } else {
            evaluate(&model, dev)?
        };
        let entry = EpochLog {
            epoch,
            // summed in dataset order so the mean does not depend on the shuffle
            loss: losses.iter().sum::<f64>() / train.len() as f64,
            dev_accuracy: dev_report.accuracy,
            dev_f: dev_report.f_score,
        };
        on_epoch(&entry);
        if best
            .as_ref()
            .map_or(true, |(_, _, acc)| entry.dev_accuracy >= *acc)
        {
            best = Some((model.clone(), epoch, entry.dev_accuracy));
        }
        log.push(entry);
    }
    let (best, best_epoch, _) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        log,
    })
}
