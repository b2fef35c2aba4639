//! Deliberately naive 64-bit reference computations. Every function here is a
//! direct transcription of the defining formula with explicit index
//! arithmetic and no shared helpers, so it can serve as an independent check
//! on the optimised kernels in `statt`.

/// Cross-correlation with zero padding `pad`. `input` is `[cin, h, w]`,
/// `kernel` `[cout, cin, k, k]`.
pub fn conv2d(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    cout: usize,
    k: usize,
    bias: &[f64],
    pad: usize,
) -> Vec<f64> {
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for y in 0..ho {
            for x in 0..wo {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = y as isize + ky as isize - pad as isize;
                            let ix = x as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let v = input[ci * h * w + iy as usize * w + ix as usize];
                            acc += v * kernel[((co * cin + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out[(co * ho + y) * wo + x] = acc;
            }
        }
    }
    out
}

/// Stride-2 transposed convolution written as a scatter: every input pixel
/// stamps its kernel-weighted copy onto a 2x2 output block. Kernel `[cin, cout, 2, 2]`.
pub fn conv_transpose2(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    cout: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![0.0; cout * ho * wo];
    if let Some(b) = bias {
        for co in 0..cout {
            for i in 0..ho * wo {
                out[co * ho * wo + i] = b[co];
            }
        }
    }
    for ci in 0..cin {
        for y in 0..h {
            for x in 0..w {
                let v = input[(ci * h + y) * w + x];
                for co in 0..cout {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            out[(co * ho + 2 * y + dy) * wo + 2 * x + dx] += v * kernel[((ci * cout + co) * 2 + dy) * 2 + dx];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2x2 max pooling; returns values and flat input indices. The first maximum
/// in row-major window order wins.
pub fn maxpool2(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut vals = Vec::new();
    let mut idx = Vec::new();
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let cells = [
                    (2 * y, 2 * x),
                    (2 * y, 2 * x + 1),
                    (2 * y + 1, 2 * x),
                    (2 * y + 1, 2 * x + 1),
                ];
                let mut best = (ch * h + cells[0].0) * w + cells[0].1;
                for &(yy, xx) in &cells[1..] {
                    let i = (ch * h + yy) * w + xx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                vals.push(input[best]);
                idx.push(best);
            }
        }
    }
    (vals, idx)
}

/// `y_r = W x_r + b` for each of `rows` rows of length `n`; `W` is `[m, n]`.
pub fn affine(x: &[f64], rows: usize, n: usize, wt: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        for j in 0..m {
            let mut acc = b[j];
            for i in 0..n {
                acc += wt[j * n + i] * x[r * n + i];
            }
            out[r * m + j] = acc;
        }
    }
    out
}

/// Softmax along `axis` of a row-major tensor, computed from the textbook
/// definition with a max shift for range.
pub fn softmax(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                mx = mx.max(x[at(j)]);
            }
            let mut z = 0.0;
            for j in 0..n {
                z += (x[at(j)] - mx).exp();
            }
            for j in 0..n {
                out[at(j)] = (x[at(j)] - mx).exp() / z;
            }
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Weights of one LSTM direction, per gate in the order F, I, O, G.
pub struct LstmGates<'a> {
    /// `[U, U]` recurrent weights.
    pub w_h: [&'a [f64]; 4],
    /// `[U, C']` input weights.
    pub w_z: [&'a [f64]; 4],
    /// `[U]` biases.
    pub b: [&'a [f64]; 4],
}

/// One LSTM step for every pixel row, transcribing
///
/// ```text
/// F = σ(W_H^F h + W_Z^F z + b^F)     I = σ(W_H^I h + W_Z^I z + b^I)
/// O = σ(W_H^O h + W_Z^O z + b^O)     G = tanh(W_H^G h + W_Z^G z + b^G)
/// c' = F ⊙ c + I ⊙ G                 h' = O ⊙ tanh(c')
/// ```
///
/// `h`, `c` are `[P, U]`, `z` is `[P, C']`.
pub fn lstm_cell(h: &[f64], c: &[f64], z: &[f64], pixels: usize, u: usize, cz: usize, wts: &LstmGates) -> (Vec<f64>, Vec<f64>) {
    let mut h_new = vec![0.0; pixels * u];
    let mut c_new = vec![0.0; pixels * u];
    for p in 0..pixels {
        for j in 0..u {
            let mut pre = [0.0; 4];
            for (gate, slot) in pre.iter_mut().enumerate() {
                let mut acc = wts.b[gate][j];
                for i in 0..u {
                    acc += wts.w_h[gate][j * u + i] * h[p * u + i];
                }
                for i in 0..cz {
                    acc += wts.w_z[gate][j * cz + i] * z[p * cz + i];
                }
                *slot = acc;
            }
            let f = sigmoid(pre[0]);
            let ig = sigmoid(pre[1]);
            let o = sigmoid(pre[2]);
            let g = pre[3].tanh();
            let cn = f * c[p * u + j] + ig * g;
            c_new[p * u + j] = cn;
            h_new[p * u + j] = o * cn.tanh();
        }
    }
    (h_new, c_new)
}

/// Runs [`lstm_cell`] over a sequence in both directions from zero state and
/// concatenates per step: output `t` is `[P, 2U]` = `[fwd_t | bwd_t]`.
pub fn bilstm(z: &[Vec<f64>], pixels: usize, u: usize, cz: usize, fwd: &LstmGates, bwd: &LstmGates) -> Vec<Vec<f64>> {
    let steps = z.len();
    let mut fw = vec![Vec::new(); steps];
    let mut bw = vec![Vec::new(); steps];
    let (mut h, mut c) = (vec![0.0; pixels * u], vec![0.0; pixels * u]);
    for t in 0..steps {
        let (hn, cn) = lstm_cell(&h, &c, &z[t], pixels, u, cz, fwd);
        fw[t] = hn.clone();
        h = hn;
        c = cn;
    }
    let (mut h, mut c) = (vec![0.0; pixels * u], vec![0.0; pixels * u]);
    for t in (0..steps).rev() {
        let (hn, cn) = lstm_cell(&h, &c, &z[t], pixels, u, cz, bwd);
        bw[t] = hn.clone();
        h = hn;
        c = cn;
    }
    (0..steps)
        .map(|t| {
            let mut row = Vec::with_capacity(pixels * 2 * u);
            for p in 0..pixels {
                row.extend_from_slice(&fw[t][p * u..(p + 1) * u]);
                row.extend_from_slice(&bw[t][p * u..(p + 1) * u]);
            }
            row
        })
        .collect()
}

/// `α_t = softmax_t( mean over pixels of w2·tanh(W1 h + b1) + b2 )` with
/// `h_t` given as `[P, D]` rows, `W1` `[A, D]`, `w2` `[A]`.
pub fn attention_weights(
    h: &[Vec<f64>],
    pixels: usize,
    d: usize,
    w1: &[f64],
    b1: &[f64],
    a: usize,
    w2: &[f64],
    b2: f64,
) -> Vec<f64> {
    let mut scores = Vec::with_capacity(h.len());
    for ht in h {
        let mut total = 0.0;
        for p in 0..pixels {
            let mut s = b2;
            for k in 0..a {
                let mut pre = b1[k];
                for i in 0..d {
                    pre += w1[k * d + i] * ht[p * d + i];
                }
                s += w2[k] * pre.tanh();
            }
            total += s;
        }
        scores.push(total / pixels as f64);
    }
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
    scores.iter().map(|s| (s - mx).exp() / z).collect()
}

/// `Σ_t α_t x_t` for equally sized slices.
pub fn aggregate(seq: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; seq[0].len()];
    for (x, &a) in seq.iter().zip(alpha) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += a * v;
        }
    }
    out
}

/// Mean of `-ln max(p, floor)` at the true class over non-ignored pixels of
/// every map. Each map is `[L, pixels]`.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[Vec<u8>], classes: usize, ignore: u8, floor: f64) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, l) in probs.iter().zip(labels) {
        let pixels = p.len() / classes;
        for i in 0..pixels {
            if l[i] == ignore {
                continue;
            }
            // One-hot sum over classes, as in the loss definition.
            for k in 0..classes {
                let y = if usize::from(l[i]) == k { 1.0 } else { 0.0 };
                if y > 0.0 {
                    total += -y * p[k * pixels + i].max(floor).ln();
                }
            }
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Label cleaning by brute force: a pixel survives erosion only if all nine
/// pixels of its 3x3 neighbourhood lie inside the grid and share its label;
/// survivors are then grouped by repeated flood fill (8-connected, same
/// label) and groups smaller than `min_size` are dropped.
pub fn clean_labels(labels: &[u8], h: usize, w: usize, min_size: usize, ignore: u8) -> Vec<u8> {
    let mut eroded = vec![ignore; h * w];
    for y in 0..h {
        for x in 0..w {
            let v = labels[y * w + x];
            if v == ignore {
                continue;
            }
            let mut ok = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 || labels[yy as usize * w + xx as usize] != v {
                        ok = false;
                    }
                }
            }
            if ok {
                eroded[y * w + x] = v;
            }
        }
    }
    let mut out = eroded.clone();
    let mut seen = vec![false; h * w];
    for start in 0..h * w {
        if seen[start] || eroded[start] == ignore {
            continue;
        }
        let v = eroded[start];
        let mut comp = vec![start];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    if !seen[j] && eroded[j] == v {
                        seen[j] = true;
                        comp.push(j);
                        stack.push(j);
                    }
                }
            }
        }
        if comp.len() < min_size {
            for i in comp {
                out[i] = ignore;
            }
        }
    }
    out
}

/// Confusion counts by scanning every (truth, prediction) pair against every
/// cell; rows = truth.
pub fn confusion(truth: &[u8], pred: &[u8], classes: usize, ignore: u8) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (t, row) in m.iter_mut().enumerate() {
        for (p, cell) in row.iter_mut().enumerate() {
            *cell = truth
                .iter()
                .zip(pred)
                .filter(|&(&a, &b)| a != ignore && usize::from(a) == t && usize::from(b) == p)
                .count() as u64;
        }
    }
    m
}

/// Per-class F1 from a confusion matrix; `None` when TP + FP + FN = 0.
pub fn f1_scores(conf: &[Vec<u64>]) -> Vec<Option<f64>> {
    let l = conf.len();
    (0..l)
        .map(|k| {
            let tp = conf[k][k] as f64;
            let fp: f64 = (0..l).filter(|&t| t != k).map(|t| conf[t][k] as f64).sum();
            let fn_: f64 = (0..l).filter(|&p| p != k).map(|p| conf[k][p] as f64).sum();
            let d = 2.0 * tp + fp + fn_;
            if d == 0.0 {
                None
            } else {
                Some(2.0 * tp / d)
            }
        })
        .collect()
}
