//! Raw loops behind the differentiable primitives. All buffers are row-major.

/// `out[m,n] = a[m,k] · b[k,n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[m,n] = a[m,k] · b[n,k]ᵀ`.
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[k,n] = a[m,k]ᵀ · b[m,n]`.
pub(crate) fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

const K: usize = 3;

/// Stride-1, zero-padded 3×3 cross-correlation plus per-channel bias.
pub(crate) fn conv2d_forward(input: &[f64], kernels: &[f64], bias: &[f64], d: ConvDims) -> Vec<f64> {
    let ConvDims { c_in, c_out, h, w } = d;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias[o]);
        for c in 0..c_in {
            let src = &input[c * h * w..(c + 1) * h * w];
            let kern = &kernels[(o * c_in + c) * K * K..(o * c_in + c + 1) * K * K];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ky in 0..K {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let sy = sy - 1;
                        for kx in 0..K {
                            let sx = x + kx;
                            if sx < 1 || sx > w {
                                continue;
                            }
                            acc += kern[ky * K + kx] * src[sy * w + sx - 1];
                        }
                    }
                    plane[y * w + x] += acc;
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] with respect to input, kernels and bias.
pub(crate) fn conv2d_backward(
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    d: ConvDims,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ConvDims { c_in, c_out, h, w } = d;
    let mut g_in = vec![0.0; c_in * h * w];
    let mut g_k = vec![0.0; kernels.len()];
    let mut g_b = vec![0.0; c_out];
    for o in 0..c_out {
        let go = &grad_out[o * h * w..(o + 1) * h * w];
        g_b[o] = go.iter().sum();
        for c in 0..c_in {
            let src = &input[c * h * w..(c + 1) * h * w];
            let base = (o * c_in + c) * K * K;
            for y in 0..h {
                for x in 0..w {
                    let g = go[y * w + x];
                    if g == 0.0 {
                        continue;
                    }
                    for ky in 0..K {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let sy = sy - 1;
                        for kx in 0..K {
                            let sx = x + kx;
                            if sx < 1 || sx > w {
                                continue;
                            }
                            let sx = sx - 1;
                            g_k[base + ky * K + kx] += g * src[sy * w + sx];
                            g_in[c * h * w + sy * w + sx] += g * kernels[base + ky * K + kx];
                        }
                    }
                }
            }
        }
    }
    (g_in, g_k, g_b)
}

/// 2×2 stride-2 max pooling over `[c,h,w]`; trailing odd rows/columns get
/// narrower windows. Returns pooled values and, per output cell, the flat
/// input index of the (first) maximum.
pub(crate) fn maxpool2_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_ix = usize::MAX;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let ix = ch * h * w + y * w + x;
                        // strict comparison keeps the first index on ties
                        if input[ix] > best {
                            best = input[ix];
                            best_ix = ix;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_ix);
            }
        }
    }
    (out, argmax, oh, ow)
}
