use super::{LrnnError, LrnnLayer};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// The affine map `H ↦ A·H + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePair<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> AffinePair<T> {
    /// `self ∘ earlier = (A₂A₁, A₂B₁ + B₂)`.
    pub fn after(&self, earlier: &AffinePair<T>) -> Result<AffinePair<T>, LrnnError> {
        Ok(AffinePair {
            a: self.a.matmul(&earlier.a)?,
            b: self.a.matmul(&earlier.b)?.add(&self.b)?,
        })
    }

    pub fn apply(&self, h: &Matrix<T>) -> Result<Matrix<T>, LrnnError> {
        Ok(self.a.matmul(h)?.add(&self.b)?)
    }
}

const SEQUENTIAL_CUTOFF: usize = 32;

fn reduce<T: Scalar>(pairs: &[AffinePair<T>]) -> Result<AffinePair<T>, LrnnError> {
    if pairs.len() == 1 {
        return Ok(pairs[0].clone());
    }
    let mid = pairs.len() / 2;
    let (left, right) = if pairs.len() > SEQUENTIAL_CUTOFF {
        rayon::join(|| reduce(&pairs[..mid]), || reduce(&pairs[mid..]))
    } else {
        (reduce(&pairs[..mid]), reduce(&pairs[mid..]))
    };
    right?.after(&left?)
}

/// Final state after `word`, combining the per-token affine maps in a
/// balanced tree. GH transitions are realized densely for this path.
pub fn scan_eval<T: Scalar>(layer: &LrnnLayer<T>, word: &[usize]) -> Result<Matrix<T>, LrnnError> {
    let n = layer.state_dim();
    let mut dense = Vec::with_capacity(layer.alphabet_size());
    for (a, b) in layer.transitions.iter().zip(&layer.inputs) {
        if b.rows() != n {
            return Err(LrnnError::Shape(format!("input with {} rows for state dimension {n}", b.rows())));
        }
        dense.push(AffinePair {
            a: a.to_matrix(n),
            b: b.clone(),
        });
    }
    let pairs = word
        .iter()
        .map(|&w| {
            dense.get(w).cloned().ok_or(LrnnError::UnknownToken {
                layer: 0,
                token: w,
                alphabet: dense.len(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Ok(layer.h0.clone());
    }
    reduce(&pairs)?.apply(&layer.h0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrnn::{layer_step, Decoder, Transition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parity_layer() -> LrnnLayer<f64> {
        LrnnLayer {
            transitions: vec![Transition::Scalar { a: 1.0 }, Transition::Scalar { a: -1.0 }],
            inputs: vec![Matrix::column(&[0.0]), Matrix::column(&[1.0])],
            h0: Matrix::column(&[0.0]),
            decoder: Decoder::PassThrough { num_labels: 2 },
            renormalize_every: 0,
        }
    }

    #[test]
    fn single_token_matches_step() {
        let l = parity_layer();
        assert_eq!(scan_eval(&l, &[1]).unwrap(), layer_step(&l, &l.h0, 1).unwrap());
    }

    #[test]
    fn parity_on_eight_ones() {
        assert_eq!(scan_eval(&parity_layer(), &[1; 8]).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn random_diagonal_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let mut transitions = Vec::new();
        let mut inputs = Vec::new();
        for _ in 0..3 {
            transitions.push(Transition::Diagonal {
                diag: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            });
            inputs.push(Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)));
        }
        let l = LrnnLayer {
            transitions,
            inputs,
            h0: Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)),
            decoder: Decoder::ArgmaxDot {
                prototypes: vec![crate::lrnn::Prototype { vector: vec![0.0; 2 * n], label: 0 }],
            },
            renormalize_every: 0,
        };
        let word: Vec<usize> = (0..64).map(|_| rng.gen_range(0..3)).collect();
        let mut h = l.h0.clone();
        for &w in &word {
            h = layer_step(&l, &h, w).unwrap();
        }
        assert!(scan_eval(&l, &word).unwrap().max_abs_diff(&h) < 1e-10);
        assert!(scan_eval(&l, &[3]).is_err());
    }
}
