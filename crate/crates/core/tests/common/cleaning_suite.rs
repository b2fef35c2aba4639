use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statt::data::{clean_labels, LabelGrid};
use statt::model::IGNORE_LABEL;
use statt_oracles as oracle;

pub type Outcome = Result<String, String>;

/// Random rectangles of random classes over a random background, with a few
/// ignored pixels sprinkled in.
fn blocky_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<u8> {
    let classes = rng.gen_range(2..6u8);
    let mut g = vec![rng.gen_range(0..classes); h * w];
    for _ in 0..rng.gen_range(3..25) {
        let (bh, bw) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let (y0, x0) = (rng.gen_range(0..h), rng.gen_range(0..w));
        let c = rng.gen_range(0..classes);
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                g[y * w + x] = c;
            }
        }
    }
    let holes = rng.gen_range(0..h * w / 20);
    for _ in 0..holes {
        let i = rng.gen_range(0..h * w);
        g[i] = IGNORE_LABEL;
    }
    g
}

/// Cleaning agrees with the brute-force oracle on `grids` random 32x32 scenes.
pub fn random_grids(grids: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (h, w) = (32, 32);
    let (mut kept, mut total) = (0usize, 0usize);
    for case in 0..grids {
        let raw = blocky_grid(&mut rng, h, w);
        let min_size = rng.gen_range(1..40);
        let got = clean_labels(&LabelGrid::new(h, w, raw.clone()).unwrap(), min_size);
        let want = oracle::clean_labels(&raw, h, w, min_size, IGNORE_LABEL);
        if let Some(i) = got.data().iter().zip(&want).position(|(a, b)| a != b) {
            return Err(format!(
                "grid {case} (min size {min_size}): pixel ({}, {}) is {} but oracle says {}",
                i / w,
                i % w,
                got.data()[i],
                want[i]
            ));
        }
        kept += got.labeled_count();
        total += h * w;
    }
    Ok(format!("{grids} grids identical, {:.1}% of pixels kept", 100.0 * kept as f64 / total as f64))
}

/// A `size` x `size` block of class 1 at (8, 8) on a 20x20 class 0 scene,
/// cleaned with minimum component size 10. Returns the block's surviving pixels.
fn block_survivors(size: usize) -> usize {
    let n = 20;
    let mut g = vec![0u8; n * n];
    for y in 8..8 + size {
        for x in 8..8 + size {
            g[y * n + x] = 1;
        }
    }
    let out = clean_labels(&LabelGrid::new(n, n, g).unwrap(), 10);
    out.data().iter().filter(|&&v| v == 1).count()
}

/// 5x5 erodes to 9 pixels and is dropped; 6x6 erodes to 16 and survives.
pub fn block_cases() -> Outcome {
    let (five, six) = (block_survivors(5), block_survivors(6));
    if five != 0 {
        return Err(format!("5x5 block kept {five} pixels"));
    }
    if six != 16 {
        return Err(format!("6x6 block kept {six} pixels, expected 16"));
    }
    Ok("5x5 removed, 6x6 keeps its 4x4 core".into())
}
