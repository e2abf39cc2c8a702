use num_complex::Complex;

use super::{GhProduct, LinalgError, Matrix};
use crate::scalar::Scalar;

pub const EIGEN_MAX_DIM: usize = 4;

/// Monic characteristic polynomial coefficients `[c_{n-1}, …, c_0]` of
/// `λⁿ + c_{n-1}λⁿ⁻¹ + … + c_0`, via Faddeev–LeVerrier.
pub fn characteristic_polynomial<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare(m.rows(), m.cols()));
    }
    let n = m.rows();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = Matrix::zeros(n, n);
    let mut c = T::one();
    for k in 1..=n {
        // M_k = A·M_{k-1} + c_{n-k+1}·I
        let mut next = m.matmul(&mk)?;
        for i in 0..n {
            next[(i, i)] = next[(i, i)] + c;
        }
        mk = next;
        let am = m.matmul(&mk)?;
        let trace = (0..n).fold(T::zero(), |acc, i| acc + am[(i, i)]);
        c = -trace / T::c(k as f64);
        coeffs.push(c);
    }
    Ok(coeffs)
}

/// Eigenvalues of a real `n × n` matrix with `n ≤ 4`, as roots of the
/// characteristic polynomial. Quadratics are solved in closed form; higher
/// degrees use Durand–Kerner followed by Newton polishing.
pub fn eigenvalues_small<T: Scalar>(m: &Matrix<T>) -> Result<Vec<Complex<f64>>, LinalgError> {
    if m.rows() > EIGEN_MAX_DIM {
        return Err(LinalgError::TooLarge(m.rows()));
    }
    let coeffs: Vec<f64> = characteristic_polynomial(m)?
        .into_iter()
        .map(Scalar::f64)
        .collect();
    Ok(polynomial_roots(&coeffs))
}

/// Eigenvalues of a GH product. The product acts as the identity on the
/// complement of `span{v_i : β_i > 0}`, so eigenvalue one is reported with
/// that multiplicity and the rest come from the (at most 4-dimensional)
/// restriction to the span.
pub fn gh_product_eigenvalues<T: Scalar>(p: &GhProduct<T>) -> Result<Vec<Complex<f64>>, LinalgError> {
    let (q, restricted) = p.restriction();
    let r = q.cols();
    let mut out = eigenvalues_small(&restricted)?;
    out.extend(std::iter::repeat(Complex::new(1.0, 0.0)).take(p.dim() - r));
    Ok(out)
}

/// Roots of the monic polynomial `xⁿ + c[0]xⁿ⁻¹ + … + c[n-1]`.
pub fn polynomial_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len();
    match n {
        0 => Vec::new(),
        1 => vec![Complex::new(-c[0], 0.0)],
        2 => quadratic_roots(c[0], c[1]),
        _ => durand_kerner(c),
    }
}

fn quadratic_roots(b: f64, c: f64) -> Vec<Complex<f64>> {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // numerically stable pair
        let q = -0.5 * (b + b.signum() * s);
        let q = if q == 0.0 { -0.5 * (b - s) } else { q };
        if q == 0.0 {
            return vec![Complex::new(0.0, 0.0); 2];
        }
        vec![Complex::new(q, 0.0), Complex::new(c / q, 0.0)]
    } else {
        let re = -b / 2.0;
        let im = (-disc).sqrt() / 2.0;
        vec![Complex::new(re, im), Complex::new(re, -im)]
    }
}

fn eval_poly(c: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let mut p = Complex::new(1.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for &ci in c {
        dp = dp * z + p;
        p = p * z + ci;
    }
    (p, dp)
}

fn durand_kerner(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len();
    let radius = 1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32) * (radius / 2.0).max(0.5)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let (p, _) = eval_poly(c, roots[i]);
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                roots[i] += Complex::new(1e-9, 1e-9);
                delta = f64::INFINITY;
                continue;
            }
            let step = p / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = eval_poly(c, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *r -= step;
            if step.norm() < 1e-16 {
                break;
            }
        }
        // snap conjugate-symmetric pairs that are numerically real
        if r.im.abs() < 1e-12 {
            r.im = 0.0;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rotation2, GhFactor};

    fn sorted_re(mut v: Vec<Complex<f64>>) -> Vec<f64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn diagonal_eigenvalues() {
        let e = eigenvalues_small(&Matrix::diag(&[0.5, -0.25, 0.9, 0.1])).unwrap();
        let got = sorted_re(e);
        for (a, b) in got.iter().zip([-0.25, 0.1, 0.5, 0.9]) {
            assert!((a - b).abs() < 1e-10, "{got:?}");
        }
    }

    #[test]
    fn rotation_has_unit_complex_pair() {
        let e = eigenvalues_small(&rotation2(0.7f64)).unwrap();
        for z in e {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.im.abs() - 0.7f64.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_with_complex_roots() {
        // (x - 0.5)(x² + 0.25) = x³ - 0.5x² + 0.25x - 0.125
        let r = polynomial_roots(&[-0.5, 0.25, -0.125]);
        let real: Vec<_> = r.iter().filter(|z| z.im == 0.0).collect();
        assert_eq!(real.len(), 1);
        assert!((real[0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gh_eigenvalues_deflate_identity_part() {
        let h = 0.5f64.sqrt();
        let p = GhProduct::new(
            4,
            vec![GhFactor::new(vec![h, h, 0.0, 0.0], 0.5).unwrap()],
        )
        .unwrap();
        let got = sorted_re(gh_product_eigenvalues(&p).unwrap());
        assert_eq!(got.len(), 4);
        assert!((got[0] - 0.5).abs() < 1e-12);
        assert!(got[1..].iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }
}
