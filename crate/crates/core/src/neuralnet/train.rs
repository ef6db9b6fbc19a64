use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{Example, Network};
use super::params::Weights;
use crate::error::{Error, Result};
use crate::lobdata::Movement;
use crate::rng::CounterRng;
use crate::scalar::{lit, Scalar};
use crate::uncertainty::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Adam {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd {
        #[serde(default = "default_lr")]
        lr: f64,
    },
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    /// Global gradient-norm ceiling; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
}

fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_clip() -> Option<f64> {
    Some(5.0)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            optimizer: Optimizer::default(),
            clip_norm: default_clip(),
        }
    }
}

/// Random streams consumed by training.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub init: CounterRng,
    pub shuffle: CounterRng,
    pub dropout: CounterRng,
}

impl TrainRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            init: CounterRng::stream(seed, "init"),
            shuffle: CounterRng::stream(seed, "shuffle"),
            dropout: CounterRng::stream(seed, "dropout"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, S> {
    pub input: &'a [S],
    pub label: Movement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub network: Network<S>,
    pub history: Vec<EpochLog>,
    /// 0 when no epoch ran and the initial weights were returned.
    pub best_epoch: usize,
}

/// Deterministic-pass loss and accuracy.
pub fn evaluate<S: Scalar>(net: &Network<S>, samples: &[Sample<'_, S>]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let examples: Vec<Example<'_, S>> = samples
        .iter()
        .map(|s| Example {
            input: s.input,
            label: s.label,
            mask: None,
        })
        .collect();
    let loss = net.loss(&examples)?.as_f64();
    let correct = samples
        .par_iter()
        .map(|s| {
            net.predict(s.input)
                .map(|p| (argmax(&p) == s.label.class_index()) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok((loss, correct as f64 / samples.len() as f64))
}

struct AdamState<S> {
    m: Weights<S>,
    v: Weights<S>,
    step: i32,
}

fn apply_update<S: Scalar>(net: &mut Network<S>, grad: &Weights<S>, opt: &Optimizer, adam: &mut Option<AdamState<S>>) {
    match *opt {
        Optimizer::Sgd { lr } => {
            net.weights_mut().add_scaled(grad, lit(-lr));
        }
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            let st = adam.get_or_insert_with(|| AdamState {
                m: grad.zeros_like(),
                v: grad.zeros_like(),
                step: 0,
            });
            st.step += 1;
            let (b1, b2): (S, S) = (lit(beta1), lit(beta2));
            let c1 = S::one() - b1.powi(st.step);
            let c2 = S::one() - b2.powi(st.step);
            let (lr, eps): (S, S) = (lit(lr), lit(eps));
            let w = net.weights_mut();
            for (((wt, gt), mt), vt) in w
                .tensors
                .iter_mut()
                .zip(&grad.tensors)
                .zip(st.m.tensors.iter_mut())
                .zip(st.v.tensors.iter_mut())
            {
                for i in 0..wt.data.len() {
                    let g = gt.data[i];
                    mt.data[i] = b1 * mt.data[i] + (S::one() - b1) * g;
                    vt.data[i] = b2 * vt.data[i] + (S::one() - b2) * g * g;
                    let mh = mt.data[i] / c1;
                    let vh = vt.data[i] / c2;
                    wt.data[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Mini-batch training; returns the weights of the epoch with the lowest
/// validation loss. Deterministic for fixed streams, independent of threads.
pub fn train<S: Scalar>(
    cfg: &ModelConfig,
    train_set: &[Sample<'_, S>],
    val_set: &[Sample<'_, S>],
    opt: &TrainConfig,
    rngs: &TrainRngs,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<S>> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    if opt.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut net = Network::init(cfg.clone(), &mut rngs.init.clone())?;
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(opt.epochs);
    let mut adam = None;
    let mut shuffle = rngs.shuffle.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=opt.epochs {
        shuffle.shuffle(&mut order);
        let drop_epoch = rngs.dropout.child(epoch as u64);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(opt.batch_size).enumerate() {
            let batch: Vec<Example<'_, S>> = idx
                .iter()
                .map(|&i| Example {
                    input: train_set[i].input,
                    label: train_set[i].label,
                    mask: Some(net.sample_mask(&mut drop_epoch.child(i as u64))),
                })
                .collect();
            let (loss, mut grad) = match net.loss_and_grad(&batch) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(Error::Divergence { epoch, batch: b }),
                Err(e) => return Err(e),
            };
            if let Some(max) = opt.clip_norm {
                let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(Error::Divergence { epoch, batch: b });
                }
                if norm > max {
                    grad.scale(lit(max / norm));
                }
            }
            apply_update(&mut net, &grad, &opt.optimizer, &mut adam);
            if net.weights().iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b });
            }
            loss_sum += loss.as_f64() * batch.len() as f64;
        }
        let (val_loss, val_accuracy) = match evaluate(&net, val_set) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(Error::Divergence { epoch, batch: 0 }),
            Err(e) => return Err(e),
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy,
        };
        debug!(
            "epoch {epoch}: train {:.5} val {:.5} acc {:.4}",
            log.train_loss, val_loss, val_accuracy
        );
        on_epoch(&log);
        history.push(log);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = net.clone();
        }
    }
    Ok(TrainOutcome {
        network: best,
        history,
        best_epoch,
    })
}
