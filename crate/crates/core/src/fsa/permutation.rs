use serde::{Deserialize, Serialize};

use super::FsaError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest degree whose factorial fits the rank type.
pub const MAX_RANK_DEGREE: usize = 20;

/// A permutation of `0..n` in one-line notation: `i ↦ mapping[i]`.
///
/// Composition is left action: `p.compose(&q)` applies `q` first, then `p`,
/// so that `to_matrix(p∘q) = to_matrix(p)·to_matrix(q)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl TryFrom<Vec<usize>> for Permutation {
    type Error = FsaError;
    fn try_from(v: Vec<usize>) -> Result<Self, FsaError> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, FsaError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &x in &mapping {
            if x >= n || seen[x] {
                return Err(FsaError::NotBijective);
            }
            seen[x] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// The transposition of `i` and `j` on `n` points.
    pub fn transposition(i: usize, j: usize, n: usize) -> Result<Self, FsaError> {
        if i >= n || j >= n {
            return Err(FsaError::NotBijective);
        }
        let mut m: Vec<usize> = (0..n).collect();
        m.swap(i, j);
        Ok(Self(m))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &x)| i == x)
    }

    /// Number of points not fixed.
    pub fn moved_points(&self) -> usize {
        self.0.iter().enumerate().filter(|(i, &x)| *i != x).count()
    }

    /// `self ∘ q`: apply `q`, then `self`.
    pub fn compose(&self, q: &Permutation) -> Result<Permutation, FsaError> {
        if self.degree() != q.degree() {
            return Err(FsaError::DegreeMismatch(self.degree(), q.degree()));
        }
        Ok(Self(q.0.iter().map(|&i| self.0[i]).collect()))
    }

    pub fn invert(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        Self(inv)
    }

    /// Matrix with `P·e_i = e_{p(i)}`.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let n = self.degree();
        let mut m = Matrix::zeros(n, n);
        for (i, &x) in self.0.iter().enumerate() {
            m[(x, i)] = T::one();
        }
        m
    }

    /// Transpositions `t₁, …, t_k` (`k ≤ n − 1`) with `p = t₁∘t₂∘…∘t_k`, from
    /// the cycle decomposition. The identity gives the empty list.
    pub fn to_transpositions(&self) -> Vec<(usize, usize)> {
        let n = self.degree();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] || self.0[start] == start {
                seen[start] = true;
                continue;
            }
            let mut cycle = vec![start];
            seen[start] = true;
            let mut cur = self.0[start];
            while cur != start {
                seen[cur] = true;
                cycle.push(cur);
                cur = self.0[cur];
            }
            // (a0 a1 … a_{L-1}) = (a0 a_{L-1}) ∘ … ∘ (a0 a1)
            for k in (1..cycle.len()).rev() {
                out.push((cycle[0], cycle[k]));
            }
        }
        out
    }

    /// Lexicographic rank of the one-line notation; the identity has rank 0.
    pub fn rank(&self) -> u64 {
        let n = self.degree();
        let mut rank = 0u64;
        let mut used = vec![false; n];
        for (pos, &x) in self.0.iter().enumerate() {
            let smaller_unused = (0..x).filter(|&y| !used[y]).count() as u64;
            rank += smaller_unused * factorial(n - 1 - pos);
            used[x] = true;
        }
        rank
    }

    pub fn unrank(mut r: u64, n: usize) -> Result<Permutation, FsaError> {
        if n > MAX_RANK_DEGREE {
            return Err(FsaError::DegreeTooLarge(n));
        }
        let total = factorial(n);
        if r >= total {
            return Err(FsaError::RankOutOfRange { rank: r, degree: n });
        }
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::with_capacity(n);
        for pos in 0..n {
            let f = factorial(n - 1 - pos);
            let idx = (r / f) as usize;
            r %= f;
            out.push(pool.remove(idx));
        }
        Ok(Self(out))
    }
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// All permutations of degree `n` in rank order.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    (0..factorial(n))
        .map(|r| Permutation::unrank(r, n).expect("rank in range"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
        assert!(p.compose(&p.invert()).unwrap().is_identity());
        assert!(p.invert().compose(&p).unwrap().is_identity());
    }

    #[test]
    fn compose_order() {
        // q: 0->1, p: 1->2; p∘q: 0->2
        let q = Permutation::new(vec![1, 0, 2]).unwrap();
        let p = Permutation::new(vec![0, 2, 1]).unwrap();
        assert_eq!(p.compose(&q).unwrap().apply(0), 2);
    }

    #[test]
    fn three_cycle_two_transpositions() {
        let c = Permutation::new(vec![1, 2, 0]).unwrap();
        let t = c.to_transpositions();
        assert_eq!(t.len(), 2);
        let mut acc = Permutation::identity(3);
        for &(i, j) in &t {
            acc = acc.compose(&Permutation::transposition(i, j, 3).unwrap()).unwrap();
        }
        assert_eq!(acc, c);
        assert!(Permutation::identity(4).to_transpositions().is_empty());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(Permutation::identity(5).rank(), 0);
        assert_eq!(Permutation::unrank(119, 5).unwrap().as_slice(), &[4, 3, 2, 1, 0]);
        assert!(matches!(
            Permutation::unrank(120, 5),
            Err(FsaError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn rank_roundtrip_exhaustive() {
        let mut seen = std::collections::HashSet::new();
        for r in 0..120 {
            let p = Permutation::unrank(r, 5).unwrap();
            assert_eq!(p.rank(), r);
            assert!(seen.insert(p));
        }
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn errors() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3]).is_err());
        let a = Permutation::identity(3);
        let b = Permutation::identity(4);
        assert!(matches!(a.compose(&b), Err(FsaError::DegreeMismatch(3, 4))));
    }

    fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn matrix_is_homomorphism(p in perm_strategy(6), q in perm_strategy(6)) {
            let lhs = p.compose(&q).unwrap().to_matrix::<f64>();
            let rhs = p.to_matrix::<f64>().matmul(&q.to_matrix()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn transpositions_rebuild(p in perm_strategy(7)) {
            let t = p.to_transpositions();
            prop_assert!(t.len() <= 6);
            let mut acc = Permutation::identity(7);
            for &(i, j) in &t {
                acc = acc.compose(&Permutation::transposition(i, j, 7).unwrap()).unwrap();
            }
            prop_assert_eq!(acc, p);
        }
    }
}
