use serde::{Deserialize, Serialize};

use super::{norm2, LinalgError, Matrix};
use crate::scalar::Scalar;

/// One generalized Householder factor `I − β·v·vᵀ` with unit `v` and
/// `β ∈ [0, 2]`. Its only eigenvalue different from one is `1 − β`, along `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GhFactor<T> {
    v: Vec<T>,
    beta: T,
}

impl<T: Scalar> GhFactor<T> {
    /// Validating constructor: `v` must already be unit norm.
    pub fn new(v: Vec<T>, beta: T) -> Result<Self, LinalgError> {
        let f = Self { v, beta };
        f.validate()?;
        Ok(f)
    }

    /// Normalizes `v` before building the factor.
    pub fn normalized(v: Vec<T>, beta: T) -> Result<Self, LinalgError> {
        let n = norm2(&v);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(LinalgError::ZeroVector);
        }
        Self::new(v.into_iter().map(|x| x / n).collect(), beta)
    }

    /// Reflection (`β = 2`) through the hyperplane orthogonal to `v`.
    pub fn reflection(v: Vec<T>) -> Result<Self, LinalgError> {
        Self::normalized(v, T::c(2.0))
    }

    /// Axis-aligned factor `I − β·e_i·e_iᵀ`.
    pub fn axis(i: usize, n: usize, beta: T) -> Result<Self, LinalgError> {
        if i >= n {
            return Err(LinalgError::IndexOutOfRange { index: i, dim: n });
        }
        let mut v = vec![T::zero(); n];
        v[i] = T::one();
        Self::new(v, beta)
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        let n = norm2(&self.v);
        if (n - T::one()).abs() > T::tol(1e-12) {
            return Err(LinalgError::NotUnit(n.f64()));
        }
        if !(self.beta >= T::zero() && self.beta <= T::c(2.0)) {
            return Err(LinalgError::BetaOutOfRange(self.beta.f64()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// The distinguished eigenvalue `1 − β`.
    pub fn eigenvalue(&self) -> T {
        T::one() - self.beta
    }

    /// `x − β·(vᵀx)·v`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, x: &mut [T]) -> Result<(), LinalgError> {
        if x.len() != self.v.len() {
            return Err(LinalgError::DimensionMismatch {
                left: self.v.len(),
                right: x.len(),
            });
        }
        let proj = self
            .v
            .iter()
            .zip(x.iter())
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let s = self.beta * proj;
        for (xi, &vi) in x.iter_mut().zip(&self.v) {
            *xi = *xi - s * vi;
        }
        Ok(())
    }

    /// Applies the factor to every column of an `n × d` matrix in place.
    pub fn apply_columns(&self, m: &mut Matrix<T>) -> Result<(), LinalgError> {
        let (n, d) = m.shape();
        if n != self.v.len() {
            return Err(LinalgError::DimensionMismatch {
                left: self.v.len(),
                right: n,
            });
        }
        for j in 0..d {
            let mut proj = T::zero();
            for i in 0..n {
                proj = proj + self.v[i] * m[(i, j)];
            }
            let s = self.beta * proj;
            for i in 0..n {
                m[(i, j)] = m[(i, j)] - s * self.v[i];
            }
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        let n = self.v.len();
        Matrix::from_fn(n, n, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id - self.beta * self.v[i] * self.v[j]
        })
    }
}

/// Ordered product `C₁·C₂·…·C_k` of GH factors sharing a dimension. The empty
/// product is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GhProduct<T> {
    dim: usize,
    factors: Vec<GhFactor<T>>,
}

impl<T: Scalar> GhProduct<T> {
    pub fn new(dim: usize, factors: Vec<GhFactor<T>>) -> Result<Self, LinalgError> {
        let p = Self { dim, factors };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            factors: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        for f in &self.factors {
            if f.dim() != self.dim {
                return Err(LinalgError::DimensionMismatch {
                    left: self.dim,
                    right: f.dim(),
                });
            }
            f.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[GhFactor<T>] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Applies the product to `x`: the last factor acts first.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, x: &mut [T]) -> Result<(), LinalgError> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: x.len(),
            });
        }
        for f in self.factors.iter().rev() {
            f.apply_in_place(x)?;
        }
        Ok(())
    }

    pub fn apply_columns(&self, m: &mut Matrix<T>) -> Result<(), LinalgError> {
        if m.rows() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: m.rows(),
            });
        }
        for f in self.factors.iter().rev() {
            f.apply_columns(m)?;
        }
        Ok(())
    }

    /// Realized matrix, built by applying the factors to the identity.
    pub fn to_matrix(&self) -> Matrix<T> {
        let mut m = Matrix::identity(self.dim);
        self.apply_columns(&mut m)
            .expect("factor dimensions validated at construction");
        m
    }

    /// Restricts the product to `span{v_i : β_i > 0}` (an invariant subspace;
    /// the product is the identity on its complement). Returns an orthonormal
    /// basis `Q` (as columns) and the restriction `QᵀNQ`.
    pub fn restriction(&self) -> (Matrix<T>, Matrix<T>) {
        let tol = T::tol(1e-10);
        let mut basis: Vec<Vec<T>> = Vec::new();
        for f in &self.factors {
            if f.beta() <= T::zero() {
                continue;
            }
            let mut w = f.v().to_vec();
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let p = super::dot(b, &w);
                    for (wi, &bi) in w.iter_mut().zip(b) {
                        *wi = *wi - p * bi;
                    }
                }
            }
            let nw = norm2(&w);
            if nw > tol {
                basis.push(w.into_iter().map(|x| x / nw).collect());
            }
        }
        let r = basis.len();
        let mut q = Matrix::zeros(self.dim, r);
        for (j, b) in basis.iter().enumerate() {
            q.set_col(j, b);
        }
        let mut nq = q.clone();
        self.apply_columns(&mut nq).expect("validated");
        let restricted = q.transpose().matmul(&nq).expect("shapes agree");
        (q, restricted)
    }
}

/// `[[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn rotation2<T: Scalar>(theta: T) -> Matrix<T> {
    let (s, c) = theta.sin_cos();
    Matrix::from_vec(2, 2, vec![c, -s, s, c]).expect("2x2")
}

/// `[[cos α, sin α], [sin α, −cos α]]`: reflection across the line at angle
/// `α/2`. Satisfies `H(α)·H(γ) = R(α − γ)`.
pub fn reflection2<T: Scalar>(alpha: T) -> Matrix<T> {
    let (s, c) = alpha.sin_cos();
    Matrix::from_vec(2, 2, vec![c, s, s, -c]).expect("2x2")
}

/// The unit vector `v` with `I − 2vvᵀ = reflection2(α)`.
pub fn reflection2_vector<T: Scalar>(alpha: T) -> Vec<T> {
    let (s, c) = (alpha / T::c(2.0)).sin_cos();
    vec![-s, c]
}

/// Two reflections whose product is `rotation2(θ)`: `H(θ)·H(0)`.
pub fn rotation_as_householders<T: Scalar>(theta: T) -> (GhFactor<T>, GhFactor<T>) {
    let first = GhFactor {
        v: reflection2_vector(theta),
        beta: T::c(2.0),
    };
    let second = GhFactor {
        v: vec![T::zero(), T::one()],
        beta: T::c(2.0),
    };
    (first, second)
}

/// Reflection whose realized matrix is the transposition of coordinates `i`
/// and `j` in dimension `n`.
pub fn swap_householder<T: Scalar>(i: usize, j: usize, n: usize) -> Result<GhFactor<T>, LinalgError> {
    if i == j {
        return Err(LinalgError::DegenerateSwap(i));
    }
    for idx in [i, j] {
        if idx >= n {
            return Err(LinalgError::IndexOutOfRange { index: idx, dim: n });
        }
    }
    let h = T::FRAC_1_SQRT_2();
    let mut v = vec![T::zero(); n];
    v[i] = h;
    v[j] = -h;
    Ok(GhFactor { v, beta: T::c(2.0) })
}
