//! Adam-driven training loop for the waveform networks.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nets::{NetKind, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Network training configuration. Layer sizes are fixed per architecture;
/// see the `nets` module constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    pub kind: NetKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl ArchConfig {
    pub fn new(kind: NetKind) -> Self {
        ArchConfig {
            kind,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config(
                "batch_size and epochs must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Result of a training run: the fitted network plus its per-epoch mean
/// training loss.
#[derive(Debug, Clone)]
pub struct FittedNetwork {
    pub network: Network,
    pub train_loss: Vec<f64>,
}

/// Global gradient-norm clip. Backpropagation through 320 timesteps
/// produces occasional exploding batches that otherwise throw Adam into
/// sustained oscillation.
const GRAD_CLIP_NORM: f64 = 1.0;

fn clip_gradients(grads: &mut [f64]) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > GRAD_CLIP_NORM {
        let scale = GRAD_CLIP_NORM / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

/// Train a network on a (N, steps, channels) batch with class labels.
///
/// Deterministic in (data, config): initialization and batch shuffling both
/// derive from the config seed. Fails with a training error naming the epoch
/// if the loss leaves the finite range.
pub fn train_network(
    cfg: &ArchConfig,
    x: &Tensor,
    labels: &[usize],
    classes: usize,
) -> Result<FittedNetwork> {
    cfg.validate()?;
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::validation(format!(
            "training batch must be (N, steps, channels), got {shape:?}"
        )));
    }
    let (n, steps, channels) = (shape[0], shape[1], shape[2]);
    if n == 0 {
        return Err(Error::training("empty training split".to_string()));
    }
    if labels.len() != n {
        return Err(Error::validation(format!(
            "{} labels for {n} training rows",
            labels.len()
        )));
    }

    let mut network = Network::init(cfg.kind, steps, channels, classes, cfg.seed)?;
    let mut adam = Adam::new(network.params().len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5b7e_a5e5);
    let row_len = steps * channels;
    let mut train_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len() * row_len);
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                batch.extend_from_slice(&x.data()[i * row_len..(i + 1) * row_len]);
                batch_labels.push(labels[i]);
            }
            let batch = Tensor::new(vec![chunk.len(), steps, channels], batch)?;
            let (loss, mut grads) = network.loss_and_grads(&batch, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::training(format!(
                    "loss diverged to {loss} at epoch {epoch}"
                )));
            }
            clip_gradients(&mut grads);
            adam.step(network.params_mut(), &grads);
            epoch_loss += loss * chunk.len() as f64;
        }
        train_loss.push(epoch_loss / n as f64);
    }

    Ok(FittedNetwork { network, train_loss })
}
