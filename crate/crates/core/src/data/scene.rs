//! Synthetic crop scenes: rectangular fields, each planted with one class
//! whose greenness follows a double-logistic season curve.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::labels::LabelGrid;
use crate::error::{Error, Result};
use crate::graph::sigmoid;
use crate::parallel::{self, Exec};
use crate::rng::{stream, tags};
use crate::tensor::Tensor;

/// Season curve of one class, in time-step units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSignature {
    pub name: String,
    /// Centre of green-up.
    pub onset: f64,
    /// Time of maximum greenness; must lie strictly between onset and offset.
    pub peak: f64,
    /// Centre of senescence/harvest.
    pub offset: f64,
    pub amplitude: f64,
}

impl ClassSignature {
    fn new(name: &str, onset: f64, peak: f64, offset: f64, amplitude: f64) -> Self {
        Self {
            name: name.into(),
            onset,
            peak,
            offset,
            amplitude,
        }
    }

    /// `A · [σ((t − onset)/r) − σ((t − offset)/r)]`.
    pub fn value(&self, t: f64, slope: f64) -> f64 {
        self.amplitude * (sigmoid((t - self.onset) / slope) - sigmoid((t - self.offset) / slope))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub time_steps: usize,
    pub channels: usize,
    /// One entry per class; the class count is its length.
    pub classes: Vec<ClassSignature>,
    /// Logistic transition width `r`.
    pub slope: f64,
    /// Target edge length of a field in pixels.
    pub mean_field_size: f64,
    /// Per-pixel Gaussian noise σ.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 512,
            width: 512,
            time_steps: 12,
            channels: 4,
            classes: vec![
                ClassSignature::new("cotton", 4.5, 7.0, 9.5, 0.8),
                ClassSignature::new("alfalfa", 1.0, 5.5, 10.5, 0.55),
                ClassSignature::new("corn", 3.0, 5.0, 7.0, 0.85),
                ClassSignature::new("winter_wheat", 0.0, 2.0, 4.5, 0.7),
            ],
            slope: 0.6,
            mean_field_size: 40.0,
            noise_sigma: 0.1,
            seed: 42,
        }
    }
}

impl SceneConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes.len() < 2 || self.classes.len() > 255 {
            return fail(format!("classes: need 2..=255 classes, got {}", self.classes.len()));
        }
        if self.time_steps < 4 {
            return fail(format!("time_steps: need at least 4, got {}", self.time_steps));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return fail("height, width and channels must be positive".into());
        }
        if !(self.mean_field_size >= 1.0) {
            return fail(format!(
                "mean_field_size: fields smaller than 1 px ({})",
                self.mean_field_size
            ));
        }
        if !(self.slope > 0.0) {
            return fail(format!("slope must be positive, got {}", self.slope));
        }
        if !(self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if !(c.onset < c.peak && c.peak < c.offset) {
                return fail(format!(
                    "classes[{i}] ({}): need onset < peak < offset, got {} / {} / {}",
                    c.name, c.onset, c.peak, c.offset
                ));
            }
            for (j, d) in self.classes.iter().enumerate().take(i) {
                if (c.onset, c.peak, c.offset) == (d.onset, d.peak, d.offset) {
                    return fail(format!("classes[{i}] and classes[{j}] share the same season timing"));
                }
                if c.name == d.name {
                    return fail(format!("classes[{i}] and classes[{j}] share the name {}", c.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Field {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub class: u8,
}

/// Raw generator output before any noise, cleaning or splitting.
#[derive(Clone, Debug)]
pub struct GeneratedScene {
    /// `[T, C, H, W]`.
    pub x: Tensor<f32>,
    pub labels: LabelGrid,
    pub fields: Vec<Field>,
    /// Per-class channel gains `[L][C]`.
    pub mixing: Vec<Vec<f64>>,
}

fn split_fields(
    rect: (usize, usize, usize, usize),
    target_area: f64,
    rng: &mut impl Rng,
    out: &mut Vec<(usize, usize, usize, usize)>,
) {
    let (r, c, h, w) = rect;
    if ((h * w) as f64) <= target_area || (h < 2 && w < 2) {
        out.push(rect);
        return;
    }
    let rows = h >= w;
    let len = if rows { h } else { w };
    let cut = ((len as f64) * rng.gen_range(0.35..0.65)).round() as usize;
    let cut = cut.clamp(1, len - 1);
    if rows {
        split_fields((r, c, cut, w), target_area, rng, out);
        split_fields((r + cut, c, h - cut, w), target_area, rng, out);
    } else {
        split_fields((r, c, h, cut), target_area, rng, out);
        split_fields((r, c + cut, h, w - cut), target_area, rng, out);
    }
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<GeneratedScene> {
    cfg.validate()?;
    let (h, w, t_len, c_len) = (cfg.height, cfg.width, cfg.time_steps, cfg.channels);
    let l_len = cfg.num_classes();

    let mut geo = stream(cfg.seed, tags::GEOMETRY, 0);
    let mut rects = Vec::new();
    split_fields((0, 0, h, w), cfg.mean_field_size * cfg.mean_field_size, &mut geo, &mut rects);
    let fields: Vec<Field> = rects
        .into_iter()
        .map(|(row, col, height, width)| Field {
            row,
            col,
            height,
            width,
            class: geo.gen_range(0..l_len) as u8,
        })
        .collect();
    let mut labels = vec![0u8; h * w];
    for f in &fields {
        for y in f.row..f.row + f.height {
            labels[y * w + f.col..y * w + f.col + f.width].fill(f.class);
        }
    }

    let mut mix_rng = stream(cfg.seed, tags::MIXING, 0);
    let gains: Vec<f64> = (0..c_len).map(|_| mix_rng.gen_range(0.5..1.5)).collect();
    let mixing: Vec<Vec<f64>> = (0..l_len)
        .map(|_| gains.iter().map(|g| g * (1.0 + 0.25 * mix_rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let baseline: Vec<f64> = (0..c_len).map(|c| 0.1 + 0.05 * c as f64).collect();

    let curves: Vec<Vec<f64>> = cfg
        .classes
        .iter()
        .map(|s| (0..t_len).map(|t| s.value(t as f64, cfg.slope)).collect())
        .collect();

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let planes = parallel::map_range(Exec::default(), t_len * c_len, |p| {
        let (t, c) = (p / c_len, p % c_len);
        let clean: Vec<f64> = (0..l_len)
            .map(|l| mixing[l][c] * curves[l][t] + baseline[c])
            .collect();
        let mut rng = stream(cfg.seed, tags::PIXEL_NOISE, p as u64);
        labels
            .iter()
            .map(|&l| {
                let e = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (clean[l as usize] + e) as f32
            })
            .collect::<Vec<f32>>()
    });
    let data = planes.concat();
    Ok(GeneratedScene {
        x: Tensor::new(vec![t_len, c_len, h, w], data)?,
        labels: LabelGrid::new(h, w, labels)?,
        fields,
        mixing,
    })
}
