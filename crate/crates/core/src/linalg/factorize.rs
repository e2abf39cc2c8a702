//! Constructive factorizations into generalized Householder products.

use super::{norm2, svd_small, GhFactor, GhProduct, LinalgError, Matrix};
use crate::scalar::Scalar;

/// Writes an orthogonal `Q` as a product of at most `n` reflections
/// (`β = 2`), `Q = H₁·H₂·…·H_k`. The identity yields the empty list.
///
/// Column `i` of the running residual is reflected onto `e_i`; columns that
/// already match `e_i` to within `1e-10` are skipped.
pub fn orthogonal_to_reflections<T: Scalar>(q: &Matrix<T>) -> Result<Vec<GhFactor<T>>, LinalgError> {
    if !q.is_square() {
        return Err(LinalgError::NotSquare(q.rows(), q.cols()));
    }
    if !q.is_orthogonal(T::tol(1e-8)) {
        return Err(LinalgError::NotOrthogonal);
    }
    let n = q.rows();
    let skip = T::tol(1e-10);
    let mut residual = q.clone();
    let mut factors = Vec::new();
    for i in 0..n {
        let mut w = residual.col(i);
        w[i] = w[i] - T::one();
        // entries above i are zero up to rounding; drop them so the
        // reflection leaves the already-fixed columns untouched
        for x in w.iter_mut().take(i) {
            *x = T::zero();
        }
        let nw = norm2(&w);
        if nw < skip {
            continue;
        }
        let f = GhFactor::normalized(w, T::c(2.0))?;
        f.apply_columns(&mut residual)?;
        factors.push(f);
    }
    Ok(factors)
}

/// Factors `M` with `‖M‖ ≤ 1` into at most `3n` GH factors with eigenvalues in
/// `[−1, 1]`: reflections for `U`, axis-aligned factors for the singular
/// values, reflections for `Vᵀ`. Unit singular values contribute no factor.
pub fn gh_factorize<T: Scalar>(m: &Matrix<T>) -> Result<GhProduct<T>, LinalgError> {
    let n = m.rows();
    let svd = svd_small(m)?;
    let top = svd.s.first().copied().unwrap_or_else(T::zero);
    if top > T::one() + T::tol(1e-8) {
        return Err(LinalgError::NormTooLarge(top.f64()));
    }
    let mut factors = orthogonal_to_reflections(&svd.u)?;
    for (i, &sigma) in svd.s.iter().enumerate() {
        let beta = (T::one() - sigma).max(T::zero());
        if beta > T::zero() {
            factors.push(GhFactor::axis(i, n, beta)?);
        }
    }
    // Vᵀ = (H₁⋯H_k)ᵀ = H_k⋯H₁
    let mut v_refl = orthogonal_to_reflections(&svd.v)?;
    v_refl.reverse();
    factors.extend(v_refl);
    GhProduct::new(n, factors)
}
