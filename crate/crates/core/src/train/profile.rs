use serde::{Deserialize, Serialize};

use crate::data::Patch;
use crate::error::{Error, Result};
use crate::model::{statt_forward, AggregationMode, ModelConfig, IGNORE_LABEL};
use crate::parallel::{self, Exec};
use crate::params::ModelParams;

/// Temporal weights averaged over patches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    /// Mean `α_t` over every patch.
    pub mean: Vec<f64>,
    pub patches: usize,
    /// Mean `α_t` over patches whose labeled pixels are mostly class `l`;
    /// `None` when no patch qualifies.
    pub per_class: Vec<Option<Vec<f64>>>,
    pub class_patches: Vec<usize>,
}

impl AttentionProfile {
    /// Mean weight over `steps` divided by mean weight over the others.
    pub fn ratio(&self, steps: &[usize]) -> Option<f64> {
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (t, &a) in self.mean.iter().enumerate() {
            if steps.contains(&t) {
                inside.push(a);
            } else {
                outside.push(a);
            }
        }
        if inside.is_empty() || outside.is_empty() {
            return None;
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(avg(&inside) / avg(&outside))
    }
}

/// Most frequent labeled class; ties go to the lower id.
pub fn majority_class(labels: &[u8], classes: usize) -> Option<usize> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l != IGNORE_LABEL && usize::from(l) < classes {
            counts[usize::from(l)] += 1;
        }
    }
    let (best, &n) = counts.iter().enumerate().rev().max_by_key(|&(_, &c)| c)?;
    (n > 0).then_some(best)
}

pub fn attention_profile(params: &ModelParams<f32>, cfg: &ModelConfig, patches: &[Patch], exec: Exec) -> Result<AttentionProfile> {
    if cfg.mode != AggregationMode::Attention {
        return Err(Error::Contract(
            "attention profile requested for a mean-mode model; its weights are the constant 1/T".into(),
        ));
    }
    if patches.is_empty() {
        return Err(Error::Config("no patches to profile".into()));
    }
    let alphas = parallel::map(exec, patches, |p| -> Result<Vec<f64>> {
        let trace = statt_forward(&p.x, params, cfg)?;
        Ok(trace.alpha.data().iter().map(|&a| f64::from(a)).collect())
    });
    let t_len = cfg.time_steps;
    let mut mean = vec![0.0; t_len];
    let mut class_sum = vec![vec![0.0; t_len]; cfg.classes];
    let mut class_patches = vec![0usize; cfg.classes];
    for (a, p) in alphas.into_iter().zip(patches) {
        let a = a?;
        for (m, v) in mean.iter_mut().zip(&a) {
            *m += v;
        }
        if let Some(k) = majority_class(&p.y, cfg.classes) {
            class_patches[k] += 1;
            for (m, v) in class_sum[k].iter_mut().zip(&a) {
                *m += v;
            }
        }
    }
    let n = patches.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    let per_class = class_sum
        .into_iter()
        .zip(&class_patches)
        .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    Ok(AttentionProfile {
        mean,
        patches: patches.len(),
        per_class,
        class_patches,
    })
}
