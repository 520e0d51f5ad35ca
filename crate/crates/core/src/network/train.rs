use crate::engine::{sgd_update, softmax_cross_entropy, DecayMode, Rng};
use crate::error::{Error, Result};

use super::data::Dataset;
use super::model::{Mode, Model};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Fixed,
    /// Multiply by `factor` every `every` epochs.
    StepDecay {
        factor: f32,
        every: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f32,
    pub schedule: LrSchedule,
    pub decay: DecayMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr: 0.1,
            schedule: LrSchedule::StepDecay {
                factor: 0.5,
                every: 8,
            },
            decay: DecayMode::L2(1e-4),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr {} must be positive", self.lr)));
        }
        if let LrSchedule::StepDecay { factor, every } = self.schedule {
            if every == 0 || !(factor > 0.0) {
                return Err(Error::invalid("step decay needs every > 0 and factor > 0"));
            }
        }
        self.decay.validate()
    }

    pub fn lr_at(&self, epoch: u32) -> f32 {
        match self.schedule {
            LrSchedule::Fixed => self.lr,
            LrSchedule::StepDecay { factor, every } => {
                self.lr * factor.powi((epoch / every) as i32)
            }
        }
    }
}

/// Per-epoch training log record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: u32,
    pub lr: f32,
    pub mean_loss: f64,
    pub train_error: f64,
}

/// Which layers update and with what dropout; the baseline trainer uses all
/// layers and the spec rates.
#[derive(Clone, Debug)]
pub(crate) struct TrainOptions {
    pub trainable: Vec<bool>,
    pub dropout: Vec<f32>,
}

impl TrainOptions {
    pub fn for_model(model: &Model) -> Self {
        TrainOptions {
            trainable: vec![true; model.specs().len()],
            dropout: model.dropout_rates(),
        }
    }
}

/// SGD over seeded shuffled minibatches. Gradients are masked so pruned
/// weights get no update; biases are not decayed.
pub fn train(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, Vec<EpochLog>)> {
    let opts = TrainOptions::for_model(&model);
    train_with(model, data, cfg, &opts)
}

pub(crate) fn train_with(
    mut model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(Model, Vec<EpochLog>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut shuffle_rng = Rng::with_stream(cfg.seed, 0);
    let mut dropout_rng = Rng::with_stream(cfg.seed, 1);
    let mut log = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = shuffle_rng.permutation(data.len());
        let mut loss_sum = 0f64;
        let mut wrong = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = data.batch(chunk);
            let (logits, record) = model.forward(
                &x,
                Mode::Train {
                    rng: &mut dropout_rng,
                    dropout: &opts.dropout,
                },
            )?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {} batch {b}: loss is {loss} (lr {lr})",
                    epoch + 1
                )));
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            wrong += logits
                .argmax_rows()?
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p != l)
                .count();
            let grads = model.backward(&record, &dlogits, &opts.trainable)?;
            apply_grads(&mut model, grads, lr, cfg.decay);
        }
        model.state.epochs += 1;
        model.state.lr = lr;
        log.push(EpochLog {
            epoch: epoch + 1,
            lr,
            mean_loss: loss_sum / data.len() as f64,
            train_error: wrong as f64 / data.len() as f64,
        });
    }
    Ok((model, log))
}

fn apply_grads(
    model: &mut Model,
    grads: Vec<Option<super::model::ParamGrad>>,
    lr: f32,
    decay: DecayMode,
) {
    for (i, g) in grads.into_iter().enumerate() {
        let Some(mut g) = g else { continue };
        let p = model.param_mut(i).expect("gradient for a weighted layer");
        let (w, mask, bias) = p.parts_mut();
        crate::pruning::mask_gradient(&mut g.weights, mask);
        sgd_update(w, &g.weights, lr, decay);
        sgd_update(bias, &g.bias, lr, DecayMode::None);
    }
}

/// Predicted class per sample, evaluated in chunks.
pub fn predict_classes(model: &Model, data: &Dataset) -> Result<Vec<usize>> {
    const CHUNK: usize = 500;
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let (x, _) = data.batch(chunk);
        out.extend(model.predict(&x)?.argmax_rows()?);
    }
    Ok(out)
}

/// Fraction of samples whose argmax prediction (ties to the lowest class) is
/// wrong.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = predict_classes(model, data)?;
    let wrong = pred
        .iter()
        .zip(data.labels())
        .filter(|(&p, &l)| p != l as usize)
        .count();
    Ok(wrong as f64 / data.len() as f64)
}
