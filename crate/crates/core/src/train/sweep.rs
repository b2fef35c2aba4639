use serde::{Deserialize, Serialize};

use super::fit::{evaluate, train, PatchSets, TrainConfig};
use super::profile::{attention_profile, AttentionProfile};
use crate::data::{build_from_scene, generate_scene, DatasetConfig};
use crate::error::{Error, Result};
use crate::model::{init_params, AggregationMode, ModelConfig};
use crate::parallel::Exec;

/// Everything a noise sweep needs. Scene and noise seeds come from
/// `dataset.scene.seed`; initialisation and shuffling from `train.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fractions: Vec<f64>,
    pub modes: Vec<AggregationMode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            fractions: vec![0.0, 0.25, 0.5],
            modes: vec![AggregationMode::Attention, AggregationMode::Mean],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::Config("fractions: empty list".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
            return Err(Error::Config(format!("fractions: {f} outside [0, 0.5]")));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("modes: empty list".into()));
        }
        self.dataset.scene.validate()?;
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub mode: AggregationMode,
    /// Test-split scores of the best-validation parameters.
    pub mean_f1: f64,
    pub class_f1: Vec<Option<f64>>,
    pub noisy_steps: Vec<usize>,
    /// Test-split temporal weights, attention mode only.
    pub profile: Option<AttentionProfile>,
}

/// For each fraction: noise a copy of one clean scene, then train and test
/// every mode from the same initial parameters.
pub fn noise_sweep(
    cfg: &SweepConfig,
    exec: Exec,
    mut progress: impl FnMut(f64, AggregationMode, usize, f64),
) -> Result<(Vec<SweepRow>, Vec<String>)> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.dataset.scene)?;
    let names = cfg.dataset.scene.class_names();
    let mut rows = Vec::with_capacity(cfg.fractions.len() * cfg.modes.len());
    for &fraction in &cfg.fractions {
        let dcfg = DatasetConfig {
            noise_fraction: fraction,
            ..cfg.dataset.clone()
        };
        let ds = build_from_scene(&dcfg, scene.x.clone(), scene.labels.clone())?;
        let sets = PatchSets::extract(&ds, &cfg.model)?;
        for &mode in &cfg.modes {
            let model = ModelConfig {
                mode,
                ..cfg.model.clone()
            };
            let init = init_params(&model, cfg.train.seed)?;
            let out = train(&model, init, &sets.train, &sets.val, &cfg.train, exec, |r| {
                progress(fraction, mode, r.epoch, r.val_mean_f1)
            })?;
            let m = evaluate(&out.params, &model, &sets.test, &names, exec)?;
            let profile = match mode {
                AggregationMode::Attention => Some(attention_profile(&out.params, &model, &sets.test, exec)?),
                AggregationMode::Mean => None,
            };
            rows.push(SweepRow {
                fraction,
                mode,
                mean_f1: m.mean_f1,
                class_f1: m.classes.iter().map(|c| c.f1).collect(),
                noisy_steps: ds.manifest.noisy_steps.clone(),
                profile,
            });
        }
    }
    Ok((rows, names))
}

/// `fraction,mode,mean_f1,<class>_f1...`; undefined scores are left empty.
pub fn sweep_csv(rows: &[SweepRow], class_names: &[String]) -> String {
    let mut s = String::from("fraction,mode,mean_f1");
    for n in class_names {
        s.push_str(&format!(",{n}_f1"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{}", r.fraction, r.mode, r.mean_f1));
        for f in &r.class_f1 {
            match f {
                Some(v) => s.push_str(&format!(",{v}")),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}
