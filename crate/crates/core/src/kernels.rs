//! Slice-level forward and backward kernels used by the graph ops.
//!
//! Loops are ordered so the innermost work is a contiguous row update, which
//! the compiler vectorises.

use crate::tensor::Real;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.k
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.k
    }

    /// Output column range `[lo, hi)` for which input column `x + kx - pad` is in bounds.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.out_w());
        (lo, hi.max(lo))
    }

    #[inline]
    fn row_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky);
        let hi = (self.h + self.pad).saturating_sub(ky).min(self.out_h());
        (lo, hi.max(lo))
    }
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eight independent partial sums so the loop vectorises; the summation order
/// is fixed, so results stay deterministic.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ar.iter().zip(br) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Unrolls input patches into a `[cin·k·k, out_h·out_w]` matrix, zeros where
/// the window leaves the image.
fn im2col<T: Real>(g: &ConvGeom, input: &[T]) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let mut cols = vec![T::zero(); g.cin * g.k * g.k * ho * wo];
    for ci in 0..g.cin {
        let src = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.row_range(ky);
            for kx in 0..g.k {
                let (xlo, xhi) = g.col_range(kx);
                let row = ((ci * g.k + ky) * g.k + kx) * ho * wo;
                for y in ylo..yhi {
                    let iy = y + ky - g.pad;
                    let ix0 = xlo + kx - g.pad;
                    cols[row + y * wo + xlo..row + y * wo + xhi]
                        .copy_from_slice(&src[iy * g.w + ix0..iy * g.w + ix0 + (xhi - xlo)]);
                }
            }
        }
    }
    cols
}

/// Adds the column matrix back onto image positions.
fn col2im<T: Real>(g: &ConvGeom, cols: &[T], din: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    for ci in 0..g.cin {
        let dst = &mut din[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.row_range(ky);
            for kx in 0..g.k {
                let (xlo, xhi) = g.col_range(kx);
                let row = ((ci * g.k + ky) * g.k + kx) * ho * wo;
                for y in ylo..yhi {
                    let iy = y + ky - g.pad;
                    let ix0 = xlo + kx - g.pad;
                    let d = &mut dst[iy * g.w + ix0..iy * g.w + ix0 + (xhi - xlo)];
                    for (a, &b) in d.iter_mut().zip(&cols[row + y * wo + xlo..row + y * wo + xhi]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

fn is_identity_unroll(g: &ConvGeom) -> bool {
    g.k == 1 && g.pad == 0
}

pub(crate) fn conv2d_forward<T: Real>(g: &ConvGeom, input: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let n = g.out_h() * g.out_w();
    let kk = g.cin * g.k * g.k;
    let unrolled;
    let cols: &[T] = if is_identity_unroll(g) {
        input
    } else {
        unrolled = im2col(g, input);
        &unrolled
    };
    let mut out = vec![T::zero(); g.cout * n];
    for (co, plane) in out.chunks_exact_mut(n).enumerate() {
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for (p, &wv) in kernel[co * kk..(co + 1) * kk].iter().enumerate() {
            if wv != T::zero() {
                axpy(plane, wv, &cols[p * n..(p + 1) * n]);
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    dout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = g.out_h() * g.out_w();
    let kk = g.cin * g.k * g.k;
    let identity = is_identity_unroll(g);
    let unrolled;
    let cols: &[T] = if identity {
        input
    } else {
        unrolled = im2col(g, input);
        &unrolled
    };
    let mut dk = vec![T::zero(); kernel.len()];
    let mut db = vec![T::zero(); g.cout];
    let mut dcols = vec![T::zero(); kk * n];
    for co in 0..g.cout {
        let gplane = &dout[co * n..(co + 1) * n];
        db[co] = gplane.iter().copied().sum();
        for p in 0..kk {
            dk[co * kk + p] = dot(gplane, &cols[p * n..(p + 1) * n]);
            let wv = kernel[co * kk + p];
            if wv != T::zero() {
                axpy(&mut dcols[p * n..(p + 1) * n], wv, gplane);
            }
        }
    }
    let din = if identity {
        dcols
    } else {
        let mut din = vec![T::zero(); input.len()];
        col2im(g, &dcols, &mut din);
        din
    };
    (din, dk, db)
}

/// Stride-2, 2x2 transposed convolution. Kernel layout `[cin, cout, 2, 2]`.
pub(crate) fn upconv2_forward<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    cout: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); cout * ho * wo];
    for co in 0..cout {
        let plane = &mut out[co * ho * wo..(co + 1) * ho * wo];
        if let Some(b) = bias {
            plane.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            let kbase = (ci * cout + co) * 4;
            let kv = [kernel[kbase], kernel[kbase + 1], kernel[kbase + 2], kernel[kbase + 3]];
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                for (dy, pair) in [(0usize, [kv[0], kv[1]]), (1, [kv[2], kv[3]])] {
                    let orow = &mut plane[(2 * y + dy) * wo..(2 * y + dy + 1) * wo];
                    for (x, &v) in row.iter().enumerate() {
                        orow[2 * x] += v * pair[0];
                        orow[2 * x + 1] += v * pair[1];
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn upconv2_backward<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    cout: usize,
    dout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (ho, wo) = (2 * h, 2 * w);
    let mut din = vec![T::zero(); input.len()];
    let mut dk = vec![T::zero(); kernel.len()];
    let mut db = vec![T::zero(); cout];
    for co in 0..cout {
        let gplane = &dout[co * ho * wo..(co + 1) * ho * wo];
        db[co] = gplane.iter().copied().sum();
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            let dsrc = &mut din[ci * h * w..(ci + 1) * h * w];
            let kbase = (ci * cout + co) * 4;
            let mut acc = [T::zero(); 4];
            for y in 0..h {
                for x in 0..w {
                    let v = src[y * w + x];
                    let g00 = gplane[(2 * y) * wo + 2 * x];
                    let g01 = gplane[(2 * y) * wo + 2 * x + 1];
                    let g10 = gplane[(2 * y + 1) * wo + 2 * x];
                    let g11 = gplane[(2 * y + 1) * wo + 2 * x + 1];
                    acc[0] += v * g00;
                    acc[1] += v * g01;
                    acc[2] += v * g10;
                    acc[3] += v * g11;
                    dsrc[y * w + x] += kernel[kbase] * g00
                        + kernel[kbase + 1] * g01
                        + kernel[kbase + 2] * g10
                        + kernel[kbase + 3] * g11;
                }
            }
            for (d, a) in dk[kbase..kbase + 4].iter_mut().zip(acc) {
                *d += a;
            }
        }
    }
    (din, dk, db)
}

/// Non-overlapping 2x2 max pool. Returns the pooled values and, per output
/// cell, the flat input index that won (first maximum in row-major order).
pub(crate) fn maxpool2_forward<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ho {
            for x in 0..wo {
                let cands = [
                    base + 2 * y * w + 2 * x,
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

/// `y[r, :] = W x[r, :] + b` for each of `rows` rows; `W` is `[m, n]`.
pub(crate) fn affine_forward<T: Real>(x: &[T], rows: usize, n: usize, w: &[T], m: usize, b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * m];
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        for (j, o) in out[r * m..(r + 1) * m].iter_mut().enumerate() {
            *o = b[j] + dot(&w[j * n..(j + 1) * n], xr);
        }
    }
    out
}

/// Returns `(d_x, d_w, d_b)`.
pub(crate) fn affine_backward<T: Real>(
    x: &[T],
    rows: usize,
    n: usize,
    w: &[T],
    m: usize,
    dout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); rows * n];
    let mut dw = vec![T::zero(); m * n];
    let mut db = vec![T::zero(); m];
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        let dxr = &mut dx[r * n..(r + 1) * n];
        for j in 0..m {
            let g = dout[r * m + j];
            if g == T::zero() {
                continue;
            }
            db[j] += g;
            axpy(dxr, g, &w[j * n..(j + 1) * n]);
            axpy(&mut dw[j * n..(j + 1) * n], g, xr);
        }
    }
    (dx, dw, db)
}

/// View a shape as `(outer, axis_len, inner)` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_forward<T: Real>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = split_axis(shape, axis);
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let mut mx = T::neg_infinity();
            for k in 0..n {
                mx = mx.max(x[idx(k)]);
            }
            let mut total = T::zero();
            for k in 0..n {
                let e = (x[idx(k)] - mx).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[idx(k)] = out[idx(k)] / total;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Real>(y: &[T], dout: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = split_axis(shape, axis);
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let mut s = T::zero();
            for k in 0..n {
                s += y[idx(k)] * dout[idx(k)];
            }
            for k in 0..n {
                dx[idx(k)] = y[idx(k)] * (dout[idx(k)] - s);
            }
        }
    }
    dx
}
