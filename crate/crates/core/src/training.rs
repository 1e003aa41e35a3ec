//! Batch gradients through the optical chain, Adam, and the training loop
//! with per-batch misalignment resampling.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InputEncoding, LabeledImageSet};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalSpec};
use crate::heads::{
    class_scores, class_scores_backward, detect_backward, detect_with, softmax_cross_entropy, HeadGradient,
};
use crate::network::{sample_displacements, DiffractiveNetwork, DisplacementSample, VaccinationSpec};
use crate::optics::ComplexField;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub vaccination: VaccinationSpec,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    /// Scores are divided by this before the softmax.
    pub loss_temperature: f64,
    /// Draw a displacement per sample instead of per batch.
    pub per_sample_displacement: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            vaccination: VaccinationSpec::NONE,
            batch_size: 64,
            epochs: 5,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
            loss_temperature: 0.1,
            per_sample_displacement: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.vaccination.validate()?;
        let (b1, b2) = self.adam_betas;
        let checks = [
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.epochs >= 1, "epochs must be at least 1"),
            (
                self.learning_rate > 0.0 && self.learning_rate.is_finite(),
                "learning_rate must be positive",
            ),
            (
                (0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2),
                "adam_betas must lie in [0, 1)",
            ),
            (self.adam_eps > 0.0, "adam_eps must be positive"),
            (
                self.loss_temperature > 0.0 && self.loss_temperature.is_finite(),
                "loss_temperature must be positive",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// One `n x n` array per layer.
    pub phases: Vec<Vec<f64>>,
    pub electronic: Option<HeadGradient>,
}

impl GradientBundle {
    fn zeros_like(network: &DiffractiveNetwork) -> Self {
        GradientBundle {
            phases: network.layers.iter().map(|l| vec![0.0; l.phase.len()]).collect(),
            electronic: network.electronic.as_ref().map(|h| HeadGradient {
                weights: vec![0.0; h.weights.len()],
                bias: vec![0.0; h.bias.len()],
            }),
        }
    }

    fn arrays(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.phases.iter().map(|p| p.as_slice()).collect();
        if let Some(h) = &self.electronic {
            out.push(&h.weights);
            out.push(&h.bias);
        }
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.phases.iter_mut().map(|p| p.as_mut_slice()).collect();
        if let Some(h) = &mut self.electronic {
            out.push(&mut h.weights);
            out.push(&mut h.bias);
        }
        out
    }

    fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, s: f64) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }
}

fn parameter_arrays_mut(network: &mut DiffractiveNetwork) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = network.layers.iter_mut().map(|l| l.phase.as_mut_slice()).collect();
    if let Some(h) = &mut network.electronic {
        out.push(&mut h.weights);
        out.push(&mut h.bias);
    }
    out
}

fn sample_gradient(
    network: &DiffractiveNetwork,
    pixels: &[Vec<usize>],
    input: &ComplexField,
    label: usize,
    d: &DisplacementSample,
    temperature: f64,
) -> Result<(f64, GradientBundle)> {
    let kernels = network.stage_kernels(d)?;
    let kernels = kernels.as_slice();
    let trace = network.forward_with(input, d, kernels)?;
    let intensities = detect_with(&trace.output, pixels);
    let scores = class_scores(&network.layout, network.electronic.as_ref(), &intensities)?;
    let (loss, grad_scores) = softmax_cross_entropy(&scores, label, temperature);
    let (grad_i, electronic) =
        class_scores_backward(&network.layout, network.electronic.as_ref(), &intensities, &grad_scores)?;
    let grad_out = detect_backward(&trace.output, pixels, &grad_i);
    let phases = network.backward(&trace, d, kernels, grad_out)?;
    Ok((loss, GradientBundle { phases, electronic }))
}

/// Mean loss and mean gradients over `batch` with one displacement per sample
/// (`displacements.len() == batch.len()`, or a single shared entry).
pub fn loss_and_gradients_with(
    network: &DiffractiveNetwork,
    batch: &[(ComplexField, usize)],
    displacements: &[DisplacementSample],
    temperature: f64,
) -> Result<(f64, GradientBundle)> {
    if batch.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    if displacements.len() != 1 && displacements.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} displacement samples for a batch of {}",
            displacements.len(),
            batch.len()
        )));
    }
    let pixels = network.layout.pixel_indices(network.grid());
    // warm the nominal kernel cache before the workers race for it
    network.stage_kernels(&displacements[0])?;
    let parts = batch
        .par_iter()
        .enumerate()
        .map(|(i, (input, label))| {
            let d = &displacements[if displacements.len() == 1 { 0 } else { i }];
            sample_gradient(network, &pixels, input, *label, d, temperature)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = GradientBundle::zeros_like(network);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Mean cross-entropy over `batch` and its gradient, with every sample seeing
/// the same displacement `d`.
pub fn loss_and_gradients(
    network: &DiffractiveNetwork,
    batch: &[(ComplexField, usize)],
    d: &DisplacementSample,
    temperature: f64,
) -> Result<(f64, GradientBundle)> {
    loss_and_gradients_with(network, batch, std::slice::from_ref(d), temperature)
}

/// Adam moments for every trainable array, in network order (layer phases,
/// then head weights and bias).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(network: &DiffractiveNetwork) -> Self {
        let zeros: Vec<Vec<f64>> = GradientBundle::zeros_like(network)
            .arrays()
            .into_iter()
            .map(|a| a.to_vec())
            .collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every network parameter.
pub fn adam_step(
    network: &mut DiffractiveNetwork,
    grads: &GradientBundle,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let g = grads.arrays();
    let shapes_ok = g.len() == state.m.len()
        && g.iter().zip(&state.m).all(|(a, b)| a.len() == b.len())
        && parameter_arrays_mut(network)
            .iter()
            .zip(&g)
            .all(|(p, a)| p.len() == a.len())
        && parameter_arrays_mut(network).len() == g.len();
    if !shapes_ok {
        return Err(Error::Dimension("gradient shapes do not match the network".into()));
    }
    state.step += 1;
    let (b1, b2) = config.adam_betas;
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let lr = config.learning_rate;
    for (((p, g), m), v) in parameter_arrays_mut(network)
        .into_iter()
        .zip(g)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub clean_val_acc: f64,
    pub vaccinated_val_acc: f64,
}

/// Trains `network` in place on `train_set`. `on_epoch` sees each log entry as
/// soon as it is complete.
pub fn train(
    network: &mut DiffractiveNetwork,
    train_set: &LabeledImageSet,
    validation: &LabeledImageSet,
    encoding: &InputEncoding,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    config.vaccination.validate_for(network.geometry())?;
    encoding.validate(network.grid())?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    train_set.check_labels(network.layout.num_classes)?;
    validation.check_labels(network.layout.num_classes)?;

    let grid = *network.grid();
    let num_layers = network.num_layers();
    let mut state = OptimizerState::new(network);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::shuffle_stream(config.seed, epoch as u32));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = idx
                .par_iter()
                .map(|&i| Ok((encoding.encode(train_set, i, &grid)?, train_set.label(i))))
                .collect::<Result<Vec<_>>>()?;
            let mut r = rng::batch_stream(config.seed, epoch as u32, b as u32);
            let draws = if config.per_sample_displacement { batch.len() } else { 1 };
            let displacements: Vec<_> = (0..draws)
                .map(|_| sample_displacements(&config.vaccination, num_layers, &mut r))
                .collect();
            let (loss, grads) = loss_and_gradients_with(network, &batch, &displacements, config.loss_temperature)?;
            adam_step(network, &grads, &mut state, config)?;
            loss_sum += loss * batch.len() as f64;
        }

        let (clean, vaccinated) = if validation.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let clean = evaluate(network, validation, encoding, &EvalSpec::clean())?.accuracy;
            let vaccinated = if config.vaccination.is_none() {
                clean
            } else {
                let spec = EvalSpec {
                    vaccination: config.vaccination,
                    seed: config.seed,
                    subset: None,
                };
                evaluate(network, validation, encoding, &spec)?.accuracy
            };
            (clean, vaccinated)
        };
        let log = EpochLog {
            epoch: epoch + 1,
            mean_loss: loss_sum / train_set.len() as f64,
            clean_val_acc: clean,
            vaccinated_val_acc: vaccinated,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}
