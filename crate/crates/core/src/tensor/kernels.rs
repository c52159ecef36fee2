//! Slice-level numeric kernels shared by the graph ops.

/// `out[m×n] = a[m×k] · b[k×n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    out.fill(0.0);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let scale = a[i * k + p];
            if scale == 0.0 {
                continue;
            }
            axpy(scale, &b[p * n..(p + 1) * n], out_row);
        }
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out[m×n] = a[k×m]ᵀ · b[k×n]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], out: &mut [f64], k: usize, m: usize, n: usize) {
    out.fill(0.0);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let scale = a[p * m + i];
            if scale == 0.0 {
                continue;
            }
            axpy(scale, b_row, &mut out[i * n..(i + 1) * n]);
        }
    }
}

#[inline]
pub(crate) fn axpy(scale: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += scale * xi;
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are deterministic.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Unfolds a `c×h×w` image into `(c·9)×(h·w)` columns for a 3×3, pad-1,
/// stride-1 correlation. Row `ci·9 + ky·3 + kx` holds the input shifted by
/// `(ky−1, kx−1)`, zero outside the image.
pub(crate) fn im2col3(input: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let plane = h * w;
    cols.fill(0.0);
    for ci in 0..c {
        let src = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = ci * 9 + ky * 3 + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (y0, y1) = shifted_range(h, ky);
                let (x0, x1) = shifted_range(w, kx);
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let d = &mut dst[y * w + x0..y * w + x1];
                    let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    d.copy_from_slice(s);
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: scatters column gradients back onto the image.
pub(crate) fn col2im3(cols: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let plane = h * w;
    for ci in 0..c {
        let dst = &mut out[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = ci * 9 + ky * 3 + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (y0, y1) = shifted_range(h, ky);
                let (x0, x1) = shifted_range(w, kx);
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let s = &src[y * w + x0..y * w + x1];
                    let d = &mut dst[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    for (di, si) in d.iter_mut().zip(s) {
                        *di += si;
                    }
                }
            }
        }
    }
}

/// Output positions `o` for which `o + k − 1` lies inside `0..extent`.
#[inline]
fn shifted_range(extent: usize, k: usize) -> (usize, usize) {
    match k {
        0 => (1, extent),
        1 => (0, extent),
        _ => (0, extent - 1),
    }
}

/// Stabilized softmax of `x` into `out`.
pub(crate) fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = libm::exp(v - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}
