use super::{dot, norm2, LinalgError, Matrix};
use crate::scalar::Scalar;

const POWER_ITERATIONS: usize = 500;
const MAX_SWEEPS: usize = 80;
pub const SVD_MAX_DIM: usize = 64;

/// `M = U·diag(s)·Vᵀ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u.clone();
        for j in 0..self.s.len() {
            for i in 0..us.rows() {
                us[(i, j)] = us[(i, j)] * self.s[j];
            }
        }
        us.matmul(&self.v.transpose()).expect("square factors")
    }
}

/// Largest singular value by power iteration on `MᵀM`, started from the
/// all-ones direction. Deterministic.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return T::zero();
    }
    let inv = T::one() / T::c(n as f64).sqrt();
    let mut x = vec![inv; n];
    let mt = m.transpose();
    let mut best = T::zero();
    let mut prev = T::zero();
    let conv = T::tol(1e-12);
    for _ in 0..POWER_ITERATIONS {
        let y = m.matvec(&x).expect("shape");
        let lambda = dot(&y, &y);
        best = best.max(lambda);
        let z = mt.matvec(&y).expect("shape");
        let nz = norm2(&z);
        if nz == T::zero() {
            break;
        }
        x = z.into_iter().map(|v| v / nz).collect();
        if (lambda - prev).abs() <= conv * lambda.max(T::min_positive_value()) {
            break;
        }
        prev = lambda;
    }
    best.sqrt()
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix with cyclic sweeps in
/// fixed `(p, q)` order.
pub fn svd_small<T: Scalar>(m: &Matrix<T>) -> Result<Svd<T>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare(m.rows(), m.cols()));
    }
    let n = m.rows();
    if n > SVD_MAX_DIM {
        return Err(LinalgError::TooLarge(n));
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    // Work on columns stored contiguously.
    let mut w: Vec<Vec<T>> = (0..n).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::c(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<(T, usize)> = w.iter().enumerate().map(|(j, col)| (norm2(col), j)).collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let smax = sv.first().map_or(T::zero(), |x| x.0);
    let null_tol = smax * eps * T::c(n as f64);

    let mut u_cols: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v_mat = Matrix::zeros(n, n);
    for (k, &(sigma, j)) in sv.iter().enumerate() {
        v_mat.set_col(k, &v[j]);
        if sigma > null_tol && sigma > T::zero() {
            u_cols.push(Some(w[j].iter().map(|&x| x / sigma).collect()));
            s.push(sigma);
        } else {
            u_cols.push(None);
            s.push(T::zero());
        }
    }
    let u_mat = complete_basis(n, u_cols);
    Ok(Svd { u: u_mat, s, v: v_mat })
}

fn rotate_pair<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let a = &mut lo[p];
    let b = &mut hi[0];
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills missing columns with an orthonormal completion (Gram-Schmidt over
/// the standard basis).
fn complete_basis<T: Scalar>(n: usize, cols: Vec<Option<Vec<T>>>) -> Matrix<T> {
    let known: Vec<Vec<T>> = cols.iter().flatten().cloned().collect();
    let mut extra: Vec<Vec<T>> = Vec::new();
    let missing = cols.iter().filter(|c| c.is_none()).count();
    let mut e = 0;
    while extra.len() < missing && e < n {
        let mut cand = vec![T::zero(); n];
        cand[e] = T::one();
        e += 1;
        for _ in 0..2 {
            for b in known.iter().chain(extra.iter()) {
                let p = dot(b, &cand);
                for (ci, &bi) in cand.iter_mut().zip(b) {
                    *ci = *ci - p * bi;
                }
            }
        }
        let nc = norm2(&cand);
        if nc > T::c(0.5) {
            extra.push(cand.into_iter().map(|x| x / nc).collect());
        }
    }
    let mut out = Matrix::zeros(n, n);
    let mut extra = extra.into_iter();
    for (j, c) in cols.into_iter().enumerate() {
        let col = match c {
            Some(c) => c,
            None => extra.next().unwrap_or_else(|| vec![T::zero(); n]),
        };
        out.set_col(j, &col);
    }
    out
}
