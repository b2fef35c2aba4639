use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IGNORE_LABEL;

/// Row-major class-id grid; [`IGNORE_LABEL`] marks unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelGrid {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dim(
                "label_grid",
                format!("{}x{} grid given {} labels", height, width, data.len()),
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn labeled_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != IGNORE_LABEL).count()
    }
}

/// One-pixel erosion with a 3x3 square element followed by removal of
/// 8-connected components smaller than `min_size`. Pixels dropped by either
/// step become [`IGNORE_LABEL`].
pub fn clean_labels(labels: &LabelGrid, min_size: usize) -> LabelGrid {
    let (h, w) = (labels.height, labels.width);
    let src = &labels.data;
    let mut eroded = vec![IGNORE_LABEL; h * w];
    if h >= 3 && w >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let v = src[y * w + x];
                if v == IGNORE_LABEL {
                    continue;
                }
                let keep = (y - 1..=y + 1).all(|yy| src[yy * w + x - 1..=yy * w + x + 1].iter().all(|&n| n == v));
                if keep {
                    eroded[y * w + x] = v;
                }
            }
        }
    }

    // Two-pass labelling with union-find over same-class 8-neighbours.
    let mut parent: Vec<u32> = (0..(h * w) as u32).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            let p = parent[i as usize];
            parent[i as usize] = parent[p as usize];
            i = p;
        }
        i
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = eroded[i];
            if v == IGNORE_LABEL {
                continue;
            }
            // Already-visited neighbours: W, NW, N, NE.
            let mut neigh = [None; 4];
            if x > 0 {
                neigh[0] = Some(i - 1);
            }
            if y > 0 {
                neigh[2] = Some(i - w);
                if x > 0 {
                    neigh[1] = Some(i - w - 1);
                }
                if x + 1 < w {
                    neigh[3] = Some(i - w + 1);
                }
            }
            for j in neigh.into_iter().flatten() {
                if eroded[j] == v {
                    let (a, b) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
                    if a != b {
                        parent[a.max(b) as usize] = a.min(b);
                    }
                }
            }
        }
    }
    let mut size = vec![0usize; h * w];
    let roots: Vec<u32> = (0..h * w)
        .map(|i| {
            if eroded[i] == IGNORE_LABEL {
                u32::MAX
            } else {
                let r = find(&mut parent, i as u32);
                size[r as usize] += 1;
                r
            }
        })
        .collect();
    let data = eroded
        .iter()
        .zip(&roots)
        .map(|(&v, &r)| {
            if v == IGNORE_LABEL || size[r as usize] < min_size {
                IGNORE_LABEL
            } else {
                v
            }
        })
        .collect();
    LabelGrid { height: h, width: w, data }
}
