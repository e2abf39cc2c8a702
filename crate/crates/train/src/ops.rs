//! Dense kernels on row-major slices.

/// `out = W·x` for `W` of shape `rows × cols`.
#[inline]
pub fn mv(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (o, row) in out[..rows].iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out += W·x`.
#[inline]
pub fn mv_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out[..rows].iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ·g` for `W` of shape `rows × cols`.
#[inline]
pub fn mtv_acc(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (row, &gi) in w.chunks_exact(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, row, &mut out[..cols]);
        }
    }
}

/// `dW += g·xᵀ`.
#[inline]
pub fn outer_acc(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (row, &gi) in dw.chunks_exact_mut(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, &x[..cols], row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Log-softmax probabilities and the loss `−log p[label]`.
pub fn softmax_xent(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - max).exp();
        z += *p;
    }
    probs.iter_mut().for_each(|p| *p /= z);
    -(logits[label] - max - z.ln())
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
