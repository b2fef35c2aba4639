use super::dataset::SceneDataset;
use super::split::Split;
use crate::error::{Error, Result};
use crate::model::IGNORE_LABEL;
use crate::parallel::{self, Exec};
use crate::tensor::Tensor;

/// An input window and the labels of its centred output window.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// `[T, C, in, in]`.
    pub x: Tensor<f32>,
    /// `out × out`, row-major. Pixels outside the requested split are ignored.
    pub y: Vec<u8>,
    /// Top-left corner of the output window in scene coordinates.
    pub row: usize,
    pub col: usize,
}

impl Patch {
    pub fn labeled(&self) -> usize {
        self.y.iter().filter(|&&v| v != IGNORE_LABEL).count()
    }
}

/// Reflect without repeating the edge (`-1 → 1`, `n → n − 2`).
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Tiles the scene with `out × out` windows at stride `out`. Each tile keeps
/// only the labels of `split` (others become ignore) and is dropped when no
/// labeled pixel remains, so every labeled pixel of the split inside the tiled
/// area appears in exactly one patch. Inputs extend `(in − out)/2` pixels on
/// each side with mirror padding at scene borders.
pub fn extract_patches(ds: &SceneDataset, split: Split, in_size: usize, out_size: usize) -> Result<Vec<Patch>> {
    if out_size == 0 || out_size > in_size || (in_size - out_size) % 2 != 0 {
        return Err(Error::Config(format!(
            "patch sizes: need 0 < out <= in with even margin, got in {in_size}, out {out_size}"
        )));
    }
    let s = ds.x.shape();
    let (t_len, c_len, h, w) = (s[0], s[1], s[2], s[3]);
    if out_size > h || out_size > w {
        return Err(Error::Config(format!(
            "output window {out_size} larger than the {h}x{w} scene"
        )));
    }
    let margin = ((in_size - out_size) / 2) as isize;
    let origins: Vec<(usize, usize)> = (0..=h - out_size)
        .step_by(out_size)
        .flat_map(|r| (0..=w - out_size).step_by(out_size).map(move |c| (r, c)))
        .collect();

    let patches = parallel::map(Exec::default(), &origins, |&(row, col)| {
        let mut y = Vec::with_capacity(out_size * out_size);
        for dy in 0..out_size {
            for dx in 0..out_size {
                let (py, px) = (row + dy, col + dx);
                let v = ds.labels.get(py, px);
                y.push(if ds.splits.split_at(py, px) == split { v } else { IGNORE_LABEL });
            }
        }
        if y.iter().all(|&v| v == IGNORE_LABEL) {
            return None;
        }
        let ys: Vec<usize> = (0..in_size)
            .map(|i| mirror(row as isize - margin + i as isize, h))
            .collect();
        let xs: Vec<usize> = (0..in_size)
            .map(|i| mirror(col as isize - margin + i as isize, w))
            .collect();
        let mut data = Vec::with_capacity(t_len * c_len * in_size * in_size);
        let src = ds.x.data();
        for plane in 0..t_len * c_len {
            let base = plane * h * w;
            for &yy in &ys {
                let line = &src[base + yy * w..base + (yy + 1) * w];
                data.extend(xs.iter().map(|&xx| line[xx]));
            }
        }
        Some(Patch {
            x: Tensor::from_parts_unchecked(vec![t_len, c_len, in_size, in_size], data),
            y,
            row,
            col,
        })
    });
    Ok(patches.into_iter().flatten().collect())
}
