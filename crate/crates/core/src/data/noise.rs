//! Scene-wide "cloud" frames replacing whole time steps.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::parallel::{self, Exec};
use crate::rng::{stream, tags};
use crate::tensor::Tensor;

/// Replaces `round(fraction · T)` distinct time steps of `x` (`[T, C, H, W]`)
/// with bright, class-independent frames: per channel the 90th percentile of
/// the clean values plus `N(0, 2σ)`. Returns the noisy steps in ascending order.
pub fn inject_noise(x: &Tensor<f32>, fraction: f64, noise_sigma: f64, seed: u64) -> Result<(Tensor<f32>, Vec<usize>)> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction {fraction} outside [0, 0.5]")));
    }
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::dim("inject_noise", format!("expected [T,C,H,W], got {s:?}")));
    }
    let (t_len, c_len, plane) = (s[0], s[1], s[2] * s[3]);
    let count = (fraction * t_len as f64).round() as usize;
    if count == 0 {
        return Ok((x.clone(), Vec::new()));
    }
    let mut steps: Vec<usize> = (0..t_len).collect();
    steps.shuffle(&mut stream(seed, tags::NOISE_STEPS, 0));
    let mut steps = steps[..count].to_vec();
    steps.sort_unstable();

    let bright: Vec<f64> = parallel::map_range(Exec::default(), c_len, |c| {
        let mut vals: Vec<f32> = (0..t_len)
            .flat_map(|t| x.data()[(t * c_len + c) * plane..(t * c_len + c + 1) * plane].iter().copied())
            .collect();
        percentile(&mut vals, 0.9)
    });
    let noise = Normal::new(0.0, 2.0 * noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = x.clone();
    let data = out.data_mut();
    for &t in &steps {
        for (c, &level) in bright.iter().enumerate() {
            let p = t * c_len + c;
            let mut rng = stream(seed, tags::CLOUD, p as u64);
            for v in &mut data[p * plane..(p + 1) * plane] {
                let e = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                *v = (level + e) as f32;
            }
        }
    }
    Ok((out, steps))
}

/// Nearest-rank percentile (`q` in `[0, 1]`).
pub fn percentile(vals: &mut [f32], q: f64) -> f64 {
    let idx = ((vals.len() as f64 * q).ceil() as usize).clamp(1, vals.len()) - 1;
    let (_, v, _) = vals.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    f64::from(*v)
}
