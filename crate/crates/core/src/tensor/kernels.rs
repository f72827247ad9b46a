// Raw slice kernels shared by eager tensor methods and graph backward rules.

use crate::error::{FateError, Result};

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

pub fn check_permutation(shape: &[usize], axes: &[usize]) -> Result<()> {
    let mut seen = vec![false; shape.len()];
    if axes.len() != shape.len() {
        return Err(FateError::shape("permute", shape, axes));
    }
    for &a in axes {
        if a >= shape.len() || seen[a] {
            return Err(FateError::shape("permute", shape, axes));
        }
        seen[a] = true;
    }
    Ok(())
}

pub fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// `out[i_0..i_n] = in[i with in-axis axes[d] = i_d]`.
pub fn permute(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return (out_shape, out);
    }
    let rank = out_shape.len();
    if rank == 0 {
        return (out_shape, data.to_vec());
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let last = rank - 1;
    let inner = out_shape[last];
    let inner_stride = src_strides[last];
    loop {
        for j in 0..inner {
            out.push(data[off + j * inner_stride]);
        }
        // advance the multi-index over all but the last axis
        let mut d = last;
        loop {
            if d == 0 {
                return (out_shape, out);
            }
            d -= 1;
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

pub fn sum_axis(data: &[f64], shape: &[usize], axis: usize) -> (Vec<usize>, Vec<f64>) {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for l in 0..len {
            let src = &data[(o * len + l) * inner..(o * len + l + 1) * inner];
            let dst = &mut out[o * inner..(o + 1) * inner];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    (out_shape, out)
}

/// Gradient of `sum_axis`: repeat the reduced gradient along `axis`.
pub fn expand_axis(grad: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        for _ in 0..len {
            out.extend_from_slice(&grad[o * inner..(o + 1) * inner]);
        }
    }
    out
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            crow.iter_mut().zip(brow).for_each(|(c, b)| *c += aip * b);
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn matmul_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
pub fn matmul_at_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            crow.iter_mut().zip(brow).for_each(|(c, b)| *c += aip * b);
        }
    }
}

pub fn softmax_axis(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * len + l) * inner + i;
            let max = (0..len).map(|l| data[at(l)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in 0..len {
                let e = (data[at(l)] - max).exp();
                out[at(l)] = e;
                z += e;
            }
            for l in 0..len {
                out[at(l)] /= z;
            }
        }
    }
    out
}

/// dx = y ⊙ (g − Σ g⊙y) along `axis`.
pub fn softmax_axis_backward(y: &[f64], g: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * len + l) * inner + i;
            let dot: f64 = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
            for l in 0..len {
                dx[at(l)] = y[at(l)] * (g[at(l)] - dot);
            }
        }
    }
    dx
}

/// Normalizes each trailing row of length `n`; returns (y, xhat, inv_std per row).
pub fn layer_norm(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    n: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / n;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv.push(is);
        for j in 0..n {
            let h = (row[j] - mean) * is;
            xhat[r * n + j] = h;
            y[r * n + j] = gamma[j] * h + beta[j];
        }
    }
    (y, xhat, inv)
}

/// Returns (dx, dgamma, dbeta).
pub fn layer_norm_backward(
    g: &[f64],
    xhat: &[f64],
    inv: &[f64],
    gamma: &[f64],
    n: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = g.len() / n;
    let mut dx = vec![0.0; g.len()];
    let mut dgamma = vec![0.0; n];
    let mut dbeta = vec![0.0; n];
    let nf = n as f64;
    for r in 0..rows {
        let gr = &g[r * n..(r + 1) * n];
        let hr = &xhat[r * n..(r + 1) * n];
        let mut sum_d = 0.0;
        let mut sum_dh = 0.0;
        for j in 0..n {
            dgamma[j] += gr[j] * hr[j];
            dbeta[j] += gr[j];
            let d = gr[j] * gamma[j];
            sum_d += d;
            sum_dh += d * hr[j];
        }
        for j in 0..n {
            let d = gr[j] * gamma[j];
            dx[r * n + j] = inv[r] / nf * (nf * d - sum_d - hr[j] * sum_dh);
        }
    }
    (dx, dgamma, dbeta)
}
