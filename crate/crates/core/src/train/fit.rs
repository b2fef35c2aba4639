use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::metrics::{argmax_classes, Confusion, Metrics};
use crate::data::{extract_patches, Patch, SceneDataset, Split};
use crate::error::{Error, Result};
use crate::model::{patch_loss_grad, statt_forward, ModelConfig};
use crate::parallel::{self, Exec};
use crate::params::ModelParams;
use crate::rng::{stream, tags};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds parameter initialisation and the per-epoch shuffles.
    pub seed: u64,
    /// Stop after this many epochs without a better validation mean F1; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("adam eps must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Patches of the three splits, cut with the model's window sizes.
#[derive(Clone, Debug)]
pub struct PatchSets {
    pub train: Vec<Patch>,
    pub val: Vec<Patch>,
    pub test: Vec<Patch>,
}

impl PatchSets {
    pub fn extract(ds: &SceneDataset, cfg: &ModelConfig) -> Result<Self> {
        check_compatible(cfg, ds)?;
        let cut = |s| extract_patches(ds, s, cfg.in_size, cfg.out_size);
        Ok(Self {
            train: cut(Split::Train)?,
            val: cut(Split::Val)?,
            test: cut(Split::Test)?,
        })
    }

    pub fn get(&self, split: Split) -> &[Patch] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// The model's input dimensions must match the dataset's.
pub fn check_compatible(cfg: &ModelConfig, ds: &SceneDataset) -> Result<()> {
    let m = &ds.manifest;
    // The tensor (or weight vector) whose shape the mismatch breaks.
    for (field, tensor, model, data) in [
        ("time_steps", "attention weights", cfg.time_steps, m.time_steps),
        ("channels", "enc.0.conv1.weight", cfg.channels, m.channels),
        ("classes", "cls.weight", cfg.classes, m.classes),
    ] {
        if model != data {
            return Err(Error::Config(format!(
                "{tensor}: model {field} = {model} but the dataset has {data}"
            )));
        }
    }
    cfg.validate()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-pixel loss over the epoch.
    pub train_loss: f64,
    pub val_mean_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best validation mean F1.
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mean_f1: f64,
    pub seconds_per_epoch: f64,
}

/// Loss and summed gradient of one batch, pixel-averaged over its labeled pixels.
pub fn batch_gradient(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    batch: &[&Patch],
    exec: Exec,
) -> Result<(f64, ModelParams<f32>)> {
    let valid: usize = batch.iter().map(|p| p.labeled()).sum();
    if valid == 0 {
        return Err(Error::Contract("every pixel in the batch is ignored".into()));
    }
    let scale = 1.0 / valid as f64;
    let parts = parallel::map(exec, batch, |p| patch_loss_grad(params, cfg, &p.x, &p.y, scale));
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for part in parts {
        let (nll, g) = part?;
        total += nll;
        grads.add_assign(&g);
    }
    Ok((total * scale, grads))
}

/// Seeded mini-batch Adam with model selection on validation mean F1.
/// `on_epoch` sees every history record as it is produced.
pub fn train(
    cfg: &ModelConfig,
    init: ModelParams<f32>,
    train_set: &[Patch],
    val_set: &[Patch],
    tcfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("train split has no labeled patches".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split has no labeled patches".into()));
    }
    let adam = tcfg.adam();
    let mut params = init;
    let mut state = AdamState::new(&params);
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::with_capacity(tcfg.epochs);
    let started = Instant::now();

    for epoch in 1..=tcfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream(tcfg.seed, tags::SHUFFLE, epoch as u64));
        let (mut loss_sum, mut pixels) = (0.0, 0usize);
        for (b, idx) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<&Patch> = idx.iter().map(|&i| &train_set[i]).collect();
            let n: usize = batch.iter().map(|p| p.labeled()).sum();
            let at = |e: Error| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, batch {b})")),
                other => other,
            };
            let (loss, grads) = batch_gradient(&params, cfg, &batch, exec).map_err(at)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            adam_step(&mut params, &grads, &mut state, &adam).map_err(at)?;
            loss_sum += loss * n as f64;
            pixels += n;
        }
        let val = evaluate(&params, cfg, val_set, &[], exec)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / pixels as f64,
            val_mean_f1: val.mean_f1,
        };
        on_epoch(&record);
        history.push(record);
        if val.mean_f1 > best.2 {
            best = (params.clone(), epoch, val.mean_f1);
        }
        if tcfg.patience > 0 && epoch - best.1 >= tcfg.patience {
            break;
        }
    }
    let seconds_per_epoch = started.elapsed().as_secs_f64() / history.len() as f64;
    Ok(TrainOutcome {
        params: best.0,
        history,
        best_epoch: best.1,
        best_val_mean_f1: best.2,
        seconds_per_epoch,
    })
}

/// Per-pixel class predictions for one patch, `out × out` row-major.
pub fn predict(params: &ModelParams<f32>, cfg: &ModelConfig, patch: &Patch) -> Result<Vec<u8>> {
    let trace = statt_forward(&patch.x, params, cfg)?;
    Ok(argmax_classes(trace.probs.data(), cfg.classes))
}

/// Confusion over every labeled pixel of `patches`. Missing class names fall
/// back to `class_<k>`.
pub fn evaluate(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    patches: &[Patch],
    class_names: &[String],
    exec: Exec,
) -> Result<Metrics> {
    let parts = parallel::map(exec, patches, |p| -> Result<Confusion> {
        let pred = predict(params, cfg, p)?;
        let mut c = Confusion::new(cfg.classes);
        c.record(&p.y, &pred)?;
        Ok(c)
    });
    let mut conf = Confusion::new(cfg.classes);
    for part in parts {
        conf.merge(&part?);
    }
    Ok(Metrics::from_confusion(&conf, class_names))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_mean_f1\n");
    for r in history {
        s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_mean_f1));
    }
    s
}
