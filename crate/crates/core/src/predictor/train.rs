//! Adam training loop with deterministic data order and resumable state.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{raw_loss_and_grad, LossWeights, ReprojNoise, TrainTarget};
use super::net::PredictorNet;
use crate::body_model::BodyModel;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::synth::{training_sample, AugmentationConfig, GenerationConfig, PoseSource, SyntheticSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Batches per epoch when training on a generated stream; a fixed
    /// dataset always runs one pass per epoch.
    pub batches_per_epoch: usize,
    pub weights: LossWeights,
    /// Reparameterized samples `B` per example in the reprojection loss.
    pub reproj_samples: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 50,
            batches_per_epoch: 25,
            weights: LossWeights::default(),
            reproj_samples: 8,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0 && self.learning_rate.is_finite() && self.epsilon > 0.0;
        if !positive || self.batch_size == 0 || self.batches_per_epoch == 0 || self.reproj_samples == 0 {
            return Err(Error::Config("learning rate, batch size, batches per epoch and B must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.weights.glob < 0.0 || self.weights.reproj < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Where training examples come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    /// Fresh corrupted samples every epoch, indexed from the training seed.
    Stream { source: &'a PoseSource, generation: &'a GenerationConfig, augmentation: &'a AugmentationConfig },
    /// A fixed set, reshuffled every epoch.
    Fixed(&'a [SyntheticSample]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub nll: f64,
    pub glob: f64,
    pub reproj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= cfg.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: PredictorNet,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
}

impl TrainState {
    pub fn new(net: PredictorNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(net.num_params());
        Ok(Self { net, config, adam, log: Vec::new() })
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }
}

fn check_compat(net: &PredictorNet, model: &BodyModel) -> Result<()> {
    let c = net.config();
    Error::check_dim("network pose dimension", model.pose_dim(), c.pose_dim)?;
    Error::check_dim("network shape dimension", model.num_betas(), c.num_betas)?;
    Error::check_dim("network keypoints", model.num_keypoints(), c.num_keypoints)
}

fn pooled_input(net: &PredictorNet, sample: &SyntheticSample) -> Result<Vec<f32>> {
    let c = net.config();
    if sample.proxy.width() != c.input_size || sample.proxy.height() != c.input_size {
        return Err(Error::Config(format!(
            "proxy is {}x{} but the network expects {}x{}",
            sample.proxy.width(),
            sample.proxy.height(),
            c.input_size,
            c.input_size
        )));
    }
    sample.proxy.pooled(c.pool_factor)
}

/// One optimizer step on a batch; returns the batch-mean loss parts.
fn step(
    state: &mut TrainState,
    model: &BodyModel,
    batch: &[(&SyntheticSample, u64)],
    epoch: usize,
    batch_index: usize,
) -> Result<EpochLog> {
    let net = &state.net;
    let cfg = &state.config;
    let mut inputs = Vec::new();
    for (s, _) in batch {
        inputs.extend(pooled_input(net, s)?);
    }
    let cache = net.forward(&inputs, batch.len())?;
    let out = cache.output();
    let mut d_out = Array2::<f64>::zeros(out.raw_dim());
    let mut sums = EpochLog { epoch, total: 0.0, nll: 0.0, glob: 0.0, reproj: 0.0 };
    let scale = 1.0 / batch.len() as f64;
    for (b, (sample, index)) in batch.iter().enumerate() {
        let target = TrainTarget::from_sample(sample);
        let mut rng = substream(cfg.seed, "reproj-noise", *index);
        let noise = ReprojNoise::draw(&mut rng, cfg.reproj_samples, model.pose_dim(), model.num_betas());
        let raw = out.row(b).to_vec();
        let (parts, grad) = raw_loss_and_grad(model, &raw, &target, &cfg.weights, &noise)?;
        if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let param_norm = net.params().iter().map(|p| p * p).sum::<f64>().sqrt();
            return Err(Error::NonFiniteLoss { epoch, batch: batch_index, param_norm });
        }
        sums.total += parts.total * scale;
        sums.nll += parts.nll * scale;
        sums.glob += parts.glob * scale;
        sums.reproj += parts.reproj * scale;
        d_out.row_mut(b).iter_mut().zip(&grad).for_each(|(d, g)| *d = g * scale);
    }
    let grad = net.backward(&cache, &d_out)?;
    let TrainState { net, adam, config, .. } = state;
    adam.update(net.params_mut(), &grad, config);
    Ok(sums)
}

/// Runs one more epoch and appends its mean losses to the log.
pub fn train_epoch(state: &mut TrainState, model: &BodyModel, data: TrainData<'_>) -> Result<EpochLog> {
    check_compat(&state.net, model)?;
    let epoch = state.epochs_done();
    let cfg = state.config.clone();
    let mut acc = EpochLog { epoch, total: 0.0, nll: 0.0, glob: 0.0, reproj: 0.0 };
    let mut batches = 0usize;
    let mut add = |acc: &mut EpochLog, l: EpochLog| {
        acc.total += l.total;
        acc.nll += l.nll;
        acc.glob += l.glob;
        acc.reproj += l.reproj;
        batches += 1;
    };
    match data {
        TrainData::Fixed(samples) => {
            if samples.is_empty() {
                return Err(Error::Config("training set is empty".into()));
            }
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut substream(cfg.seed, "shuffle", epoch as u64));
            for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let batch: Vec<(&SyntheticSample, u64)> = chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| (&samples[k], (epoch * samples.len() + bi * cfg.batch_size + i) as u64))
                    .collect();
                let l = step(state, model, &batch, epoch, bi)?;
                add(&mut acc, l);
            }
        }
        TrainData::Stream { source, generation, augmentation } => {
            for bi in 0..cfg.batches_per_epoch {
                let first = ((epoch * cfg.batches_per_epoch + bi) * cfg.batch_size) as u64;
                let samples = (0..cfg.batch_size as u64)
                    .map(|i| training_sample(model, source, generation, augmentation, cfg.seed, first + i))
                    .collect::<Result<Vec<_>>>()?;
                let batch: Vec<(&SyntheticSample, u64)> =
                    samples.iter().enumerate().map(|(i, s)| (s, first + i as u64)).collect();
                let l = step(state, model, &batch, epoch, bi)?;
                add(&mut acc, l);
            }
        }
    }
    let n = batches as f64;
    let log = EpochLog { epoch, total: acc.total / n, nll: acc.nll / n, glob: acc.glob / n, reproj: acc.reproj / n };
    state.log.push(log);
    Ok(log)
}

/// Trains until `state.config.epochs` epochs are logged, calling
/// `on_epoch` after each one (e.g. to print or checkpoint).
pub fn train_with(
    state: &mut TrainState,
    model: &BodyModel,
    data: TrainData<'_>,
    on_epoch: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<()> {
    while state.epochs_done() < state.config.epochs {
        train_epoch(state, model, data)?;
        on_epoch(state)?;
    }
    Ok(())
}

/// Trains a network from scratch and returns the final state.
pub fn train(net: PredictorNet, model: &BodyModel, data: TrainData<'_>, cfg: &TrainConfig) -> Result<TrainState> {
    let mut state = TrainState::new(net, cfg.clone())?;
    train_with(&mut state, model, data, &mut |_| Ok(()))?;
    Ok(state)
}
