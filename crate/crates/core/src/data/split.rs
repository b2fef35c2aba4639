use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (train|val|test)"))),
        }
    }
}

/// Assignment of a regular grid of scene cells to splits. Rows/columns left
/// over by the integer division attach to the last cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMap {
    pub height: usize,
    pub width: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Row-major, one entry per cell.
    pub cells: Vec<Split>,
}

impl SplitMap {
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.grid_rows * self.grid_cols {
            return Err(Error::Config(format!(
                "split map has {} cells for a {}x{} grid",
                self.cells.len(),
                self.grid_rows,
                self.grid_cols
            )));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 || self.height < self.grid_rows || self.width < self.grid_cols {
            return Err(Error::Config(format!(
                "{}x{} grid does not fit a {}x{} scene",
                self.grid_rows, self.grid_cols, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn cell_of(&self, y: usize, x: usize) -> usize {
        let row = (y / (self.height / self.grid_rows)).min(self.grid_rows - 1);
        let col = (x / (self.width / self.grid_cols)).min(self.grid_cols - 1);
        row * self.grid_cols + col
    }

    pub fn split_at(&self, y: usize, x: usize) -> Split {
        self.cells[self.cell_of(y, x)]
    }

    pub fn count(&self, split: Split) -> usize {
        self.cells.iter().filter(|&&s| s == split).count()
    }
}

/// Seeded permutation of the grid cells; the first `round(r_train · n)` go to
/// train, the next `round(r_val · n)` to val and the rest to test.
pub fn grid_split(
    height: usize,
    width: usize,
    grid: (usize, usize),
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitMap> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n = grid.0 * grid.1;
    let n_train = (a * n as f64).round() as usize;
    let n_val = ((b * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, tags::SPLIT, 0));
    let mut cells = vec![Split::Test; n];
    for (rank, &cell) in order.iter().enumerate() {
        cells[cell] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let map = SplitMap {
        height,
        width,
        grid_rows: grid.0,
        grid_cols: grid.1,
        cells,
    };
    map.validate()?;
    Ok(map)
}
