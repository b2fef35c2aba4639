//! In-memory scene datasets, normalisation and the on-disk directory format:
//!
//! ```text
//! manifest.json   version, dims, class names, seed, noisy steps, normalisation, file list
//! X.bin           [T, C, H, W] row-major little-endian f32
//! Y.bin           [H, W] u8, 255 = ignore
//! splits.json     grid cell -> split
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::{clean_labels, LabelGrid};
use super::noise::inject_noise;
use super::scene::{generate_scene, SceneConfig};
use super::split::{grid_split, Split, SplitMap};
use crate::error::{Error, Result};
use crate::io::{read_exact_size, read_f32le, write_atomic, write_f32le};
use crate::model::IGNORE_LABEL;
use crate::rng::{derive_seed, tags};
use crate::tensor::Tensor;

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub x: String,
    pub y: String,
    pub splits: String,
}

impl Default for DatasetFiles {
    fn default() -> Self {
        Self {
            x: "X.bin".into(),
            y: "Y.bin".into(),
            splits: "splits.json".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub time_steps: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub noisy_steps: Vec<usize>,
    pub normalization: Option<NormStats>,
    /// Set once the stored stats have been applied to `X`.
    pub normalized: bool,
    pub files: DatasetFiles,
}

#[derive(Clone, Debug)]
pub struct SceneDataset {
    /// `[T, C, H, W]`.
    pub x: Tensor<f32>,
    pub labels: LabelGrid,
    pub splits: SplitMap,
    pub manifest: DatasetManifest,
}

impl SceneDataset {
    pub fn class_names(&self) -> &[String] {
        &self.manifest.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.classes
    }
}

/// Per-channel mean and standard deviation over train-split pixels, all time steps.
pub fn compute_norm_stats(x: &Tensor<f32>, splits: &SplitMap) -> Result<NormStats> {
    let s = x.shape();
    let (t_len, c_len, h, w) = (s[0], s[1], s[2], s[3]);
    let train: Vec<usize> = (0..h * w)
        .filter(|&p| splits.split_at(p / w, p % w) == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(Error::Config("train split is empty; cannot compute normalisation".into()));
    }
    let mut mean = Vec::with_capacity(c_len);
    let mut std = Vec::with_capacity(c_len);
    for c in 0..c_len {
        let (mut sum, mut sq) = (0.0f64, 0.0f64);
        for t in 0..t_len {
            let plane = &x.data()[(t * c_len + c) * h * w..(t * c_len + c + 1) * h * w];
            for &p in &train {
                let v = f64::from(plane[p]);
                sum += v;
                sq += v * v;
            }
        }
        let n = (train.len() * t_len) as f64;
        let m = sum / n;
        let var = (sq / n - m * m).max(0.0);
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(NormStats { mean, std })
}

/// `(x − mean_c) / σ_c` per channel.
pub fn normalize(x: &Tensor<f32>, stats: &NormStats) -> Result<Tensor<f32>> {
    let s = x.shape();
    let (c_len, plane) = (s[1], s[2] * s[3]);
    if stats.mean.len() != c_len || stats.std.len() != c_len {
        return Err(Error::dim(
            "normalize",
            format!("stats for {} channels, data has {c_len}", stats.mean.len()),
        ));
    }
    if let Some(c) = stats.std.iter().position(|&v| !(v > 1e-12)) {
        return Err(Error::Config(format!("channel {c} has zero standard deviation")));
    }
    let mut out = x.clone();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let c = i % c_len;
        let (m, sd) = (stats.mean[c], stats.std[c]);
        for v in chunk {
            *v = ((f64::from(*v) - m) / sd) as f32;
        }
    }
    Ok(out)
}

/// Computes train-split statistics, stores them in the manifest and applies
/// them. Refuses to normalise twice.
pub fn normalize_dataset(ds: &mut SceneDataset) -> Result<()> {
    if ds.manifest.normalized {
        return Err(Error::Contract("dataset is already normalised".into()));
    }
    let stats = compute_norm_stats(&ds.x, &ds.splits)?;
    ds.x = normalize(&ds.x, &stats)?;
    ds.manifest.normalization = Some(stats);
    ds.manifest.normalized = true;
    Ok(())
}

/// Everything needed to produce a dataset directory from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    /// Fraction of time steps replaced by cloud frames, in `[0, 0.5]`.
    pub noise_fraction: f64,
    pub clean_labels: bool,
    pub min_component_size: usize,
    pub grid: (usize, usize),
    pub split_ratios: (f64, f64, f64),
    pub normalize: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise_fraction: 0.0,
            clean_labels: true,
            min_component_size: 10,
            grid: (10, 10),
            split_ratios: (0.6, 0.2, 0.2),
            normalize: true,
        }
    }
}

/// generate → inject noise → clean labels → grid split → normalise.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<SceneDataset> {
    let scene = generate_scene(&cfg.scene)?;
    build_from_scene(cfg, scene.x, scene.labels)
}

/// The pipeline after generation, for callers that reuse one clean scene.
pub fn build_from_scene(cfg: &DatasetConfig, x: Tensor<f32>, labels: LabelGrid) -> Result<SceneDataset> {
    let sc = &cfg.scene;
    let seed = sc.seed;
    let (x, noisy_steps) = inject_noise(&x, cfg.noise_fraction, sc.noise_sigma, derive_seed(seed, tags::NOISE_STEPS, 0))?;
    let labels = if cfg.clean_labels {
        clean_labels(&labels, cfg.min_component_size)
    } else {
        labels
    };
    let splits = grid_split(sc.height, sc.width, cfg.grid, cfg.split_ratios, derive_seed(seed, tags::SPLIT, 0))?;
    let mut ds = SceneDataset {
        x,
        labels,
        splits,
        manifest: DatasetManifest {
            version: DATASET_VERSION,
            time_steps: sc.time_steps,
            channels: sc.channels,
            height: sc.height,
            width: sc.width,
            classes: sc.num_classes(),
            class_names: sc.class_names(),
            seed,
            noisy_steps,
            normalization: None,
            normalized: false,
            files: DatasetFiles::default(),
        },
    };
    if cfg.normalize {
        normalize_dataset(&mut ds)?;
    }
    Ok(ds)
}

pub fn save_dataset(dir: &Path, ds: &SceneDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = &ds.manifest.files;
    write_f32le(&dir.join(&files.x), ds.x.data())?;
    write_atomic(&dir.join(&files.y), ds.labels.data())?;
    let splits = serde_json::to_string_pretty(&ds.splits).expect("split map serialises");
    write_atomic(&dir.join(&files.splits), splits.as_bytes())?;
    let manifest = serde_json::to_string_pretty(&ds.manifest).expect("manifest serialises");
    write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())
}

pub fn load_dataset(dir: &Path) -> Result<SceneDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(&mpath, "manifest", e.to_string()))?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::load(&mpath, "version", format!("unsupported version {}", manifest.version)));
    }
    let (t, c, h, w, l) = (
        manifest.time_steps,
        manifest.channels,
        manifest.height,
        manifest.width,
        manifest.classes,
    );
    if [t, c, h, w].contains(&0) {
        return Err(Error::load(&mpath, "dims", "zero-length dimension"));
    }
    if manifest.class_names.len() != l || !(2..=255).contains(&l) {
        return Err(Error::load(
            &mpath,
            "class_names",
            format!("{} names for {l} classes", manifest.class_names.len()),
        ));
    }
    if manifest.noisy_steps.iter().any(|&s| s >= t) {
        return Err(Error::load(&mpath, "noisy_steps", "step outside the time axis"));
    }
    if let Some(stats) = &manifest.normalization {
        if stats.mean.len() != c || stats.std.len() != c {
            return Err(Error::load(&mpath, "normalization", "stats length differs from channels"));
        }
    }

    let xpath = dir.join(&manifest.files.x);
    let x = Tensor::new(vec![t, c, h, w], read_f32le(&xpath, t * c * h * w)?)?;
    let ypath = dir.join(&manifest.files.y);
    let labels = LabelGrid::new(h, w, read_exact_size(&ypath, h * w)?)?;
    if let Some(p) = labels.data().iter().position(|&v| v != IGNORE_LABEL && usize::from(v) >= l) {
        return Err(Error::load(&ypath, "labels", format!("pixel {p} has class id >= {l}")));
    }
    let spath = dir.join(&manifest.files.splits);
    let stext = fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
    let splits: SplitMap = serde_json::from_str(&stext).map_err(|e| Error::load(&spath, "splits", e.to_string()))?;
    splits
        .validate()
        .map_err(|e| Error::load(&spath, "cells", e.to_string()))?;
    if splits.height != h || splits.width != w {
        return Err(Error::load(&spath, "height/width", "split map dims differ from manifest"));
    }
    Ok(SceneDataset {
        x,
        labels,
        splits,
        manifest,
    })
}
