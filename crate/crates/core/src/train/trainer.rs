use std::fs;
use std::path::PathBuf;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adadelta::{AdadeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
use super::loss::batch_mse;
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::net::{assemble_input, images_to_tensor, save_checkpoint, Mode, Model, Tensor};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub run_id: String,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the mini-batch shuffles. Callers that build the model
    /// themselves should use the same value as the init seed so one number
    /// reproduces the run.
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    /// Keep the parameters of the best validation epoch instead of the last.
    pub keep_best: bool,
    /// When set, `run.json` and `checkpoint/` are written here.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            run_id: "R1".into(),
            epochs: 240,
            batch_size: 8,
            seed: 0,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            keep_best: false,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub run_id: String,
    pub init_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub final_val_error: f64,
    pub checkpoint_path: Option<PathBuf>,
}

/// A sample converted to network tensors once, up front.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensors {
    pub image_id: String,
    /// `1 x 5 x m x n`: `I''`, retain mask `M_r`, restore mask `M_h`.
    pub input: Tensor,
    /// `1 x 3 x m x n`: `I'`.
    pub target: Tensor,
}

impl SampleTensors {
    pub fn new(sample: &Sample) -> Result<Self> {
        Ok(Self {
            image_id: sample.image_id.clone(),
            input: assemble_input(&sample.input_image, &sample.retain_mask, &sample.restore_mask)?,
            target: images_to_tensor(&[&sample.target_image])?,
        })
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Vec<Self>> {
        samples.iter().map(Self::new).collect()
    }
}

fn stack<'a>(items: impl Iterator<Item = &'a Tensor>) -> Result<Tensor> {
    Tensor::stack(&items.collect::<Vec<_>>())
}

/// Eval-mode MSE averaged over `samples`, evaluated `batch_size` at a time.
pub fn evaluate_mse(model: &Model, samples: &[SampleTensors], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let x = stack(chunk.iter().map(|s| &s.input))?;
        let t = stack(chunk.iter().map(|s| &s.target))?;
        let y = model.forward(&x, Mode::Eval)?;
        let (loss, _) = batch_mse(&y, &t)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains `model` in place with shuffled mini-batches, Adadelta and the
/// full-image MSE, validating in eval mode after every epoch.
pub fn train(model: &mut Model, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainRun> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let train_t = SampleTensors::from_samples(train_set)?;
    let val_t = SampleTensors::from_samples(val_set)?;
    let names = model.trainable_names();
    let mut opt = AdadeltaState::new(model.trainable().iter().map(|t| t.len()), cfg.rho, cfg.epsilon)?;

    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Model)> = None;
    let mut order: Vec<usize> = (0..train_t.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &format!("shuffle/{epoch}")));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let x = stack(batch.iter().map(|&i| &train_t[i].input))?;
            let t = stack(batch.iter().map(|&i| &train_t[i].target))?;
            let cache = model.forward_train(&x)?;
            let (loss, grad) = batch_mse(cache.output(), &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = model.backward(&cache, &grad)?;
            opt.step(&mut model.trainable_mut(), &grads.tensors(), &names)?;
            model.update_running_stats(&cache);
            epoch_loss += loss * batch.len() as f64;
            debug!("{} epoch {} batch {}: loss {:.6}", cfg.run_id, epoch + 1, b, loss);
        }
        let train_err = epoch_loss / train_t.len() as f64;
        let val_err = evaluate_mse(model, &val_t, cfg.batch_size)?;
        if !val_err.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        info!(
            "{} epoch {}/{}: train {:.6} val {:.6}",
            cfg.run_id,
            epoch + 1,
            cfg.epochs,
            train_err,
            val_err
        );
        train_curve.push(train_err);
        val_curve.push(val_err);
        if cfg.keep_best && best.as_ref().is_none_or(|(e, _)| val_err < *e) {
            best = Some((val_err, model.clone()));
        }
    }

    let final_val_error = match (best, val_curve.last()) {
        (Some((err, params)), _) => {
            *model = params;
            err
        }
        (None, Some(&last)) => last,
        (None, None) => evaluate_mse(model, &val_t, cfg.batch_size)?,
    };

    let mut run = TrainRun {
        run_id: cfg.run_id.clone(),
        init_seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        train_curve,
        val_curve,
        final_val_error,
        checkpoint_path: None,
    };
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        run.checkpoint_path = Some(save_checkpoint(model, dir.join("checkpoint"))?);
        fs::write(dir.join("run.json"), serde_json::to_vec_pretty(&run)?)?;
    }
    Ok(run)
}
