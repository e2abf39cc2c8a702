use serde::{Deserialize, Serialize};

use super::LrnnError;
use crate::fsa::factorial;
use crate::scalar::Scalar;

/// Entries within this distance of an integer decode to it.
pub const ROUND_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prototype<T> {
    pub vector: Vec<T>,
    pub label: usize,
}

/// Maps a layer state (and the token that produced it) to a discrete output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Decoder<T> {
    /// Label of the prototype with the largest inner product with the
    /// flattened state; ties go to the lowest prototype index.
    ArgmaxDot { prototypes: Vec<Prototype<T>> },
    /// The state column must be a rearrangement `P_π·r` of `reference`
    /// (entrywise within the rounding tolerance); outputs the lexicographic
    /// rank of `π`.
    RoundReadout { reference: Vec<i64> },
    /// The single state entry rounded to an integer in `0..num_labels`.
    PassThrough { num_labels: usize },
    /// `(1, …, n)ᵀ·H − 1` for a one-hot state column: the index of the hot
    /// entry.
    PositionIndex,
    /// `token·card + inner(H)`, where `card` bounds the inner output.
    PairWithToken { inner: Box<Decoder<T>>, card: usize },
}

#[inline]
fn round_entry<T: Scalar>(h: T) -> Result<i64, LrnnError> {
    let x = h.f64();
    // half away from zero via truncating casts; `f64::round` is a libm call on baseline x86-64
    if x.is_finite() && x.abs() < 9.0e15 {
        let z = if x >= 0.0 { (x + 0.5) as i64 } else { -((0.5 - x) as i64) };
        if (x - z as f64).abs() < ROUND_TOLERANCE {
            return Ok(z);
        }
    }
    Err(not_integer(x))
}

/// The entry rounded to an integer in `0..num_labels`.
#[inline]
pub(crate) fn pass_through<T: Scalar>(h: T, num_labels: usize) -> Result<usize, LrnnError> {
    let x = h.f64();
    // the range test also rejects NaN and infinities
    // signed conversions are single instructions on x86-64
    if x > -ROUND_TOLERANCE && x < num_labels as i64 as f64 - (1.0 - ROUND_TOLERANCE) {
        let z = (x + 0.5) as i64;
        if (x - z as f64).abs() < ROUND_TOLERANCE {
            return Ok(z as usize);
        }
    }
    Err(pass_through_error(x, num_labels))
}

#[cold]
fn pass_through_error(x: f64, num_labels: usize) -> LrnnError {
    match round_entry(x) {
        Ok(z) => LrnnError::Decode(format!("value {z} outside 0..{num_labels}")),
        Err(e) => e,
    }
}

#[cold]
fn not_integer(x: f64) -> LrnnError {
    LrnnError::Decode(format!("entry {x} is not within {ROUND_TOLERANCE} of an integer"))
}

impl<T: Scalar> Decoder<T> {
    /// Number of distinct outputs, given the size of the layer's input
    /// alphabet and its state dimension.
    pub fn num_outputs(&self, alphabet: usize, state_dim: usize) -> usize {
        match self {
            Decoder::ArgmaxDot { prototypes } => prototypes.iter().map(|p| p.label + 1).max().unwrap_or(0),
            Decoder::RoundReadout { reference } => factorial(reference.len()) as usize,
            Decoder::PassThrough { num_labels } => *num_labels,
            Decoder::PositionIndex => state_dim,
            Decoder::PairWithToken { card, .. } => alphabet * card,
        }
    }

    pub fn validate(&self, state_dim: usize, value_dim: usize) -> Result<(), LrnnError> {
        let bad = |m: String| Err(LrnnError::InvalidDecoder(m));
        match self {
            Decoder::ArgmaxDot { prototypes } => {
                if prototypes.is_empty() {
                    return bad("no prototypes".into());
                }
                if let Some(p) = prototypes.iter().find(|p| p.vector.len() != state_dim * value_dim) {
                    return bad(format!("prototype of length {}", p.vector.len()));
                }
            }
            Decoder::RoundReadout { reference } => {
                if reference.len() != state_dim || value_dim != 1 {
                    return bad("reference must match an n×1 state".into());
                }
                let mut r = reference.clone();
                r.sort_unstable();
                if r.windows(2).any(|w| w[0] == w[1]) {
                    return bad("reference entries must be distinct".into());
                }
                if reference.len() > crate::fsa::MAX_RANK_DEGREE {
                    return bad("reference too long to rank".into());
                }
            }
            Decoder::PassThrough { num_labels } => {
                if state_dim * value_dim != 1 || *num_labels == 0 {
                    return bad("pass-through needs a scalar state and labels".into());
                }
            }
            Decoder::PositionIndex => {
                if value_dim != 1 {
                    return bad("position index needs an n×1 state".into());
                }
            }
            Decoder::PairWithToken { inner, card } => {
                inner.validate(state_dim, value_dim)?;
                if inner.num_outputs(1, state_dim) > *card {
                    return bad("card smaller than the inner output set".into());
                }
            }
        }
        Ok(())
    }

    /// Decodes a flattened row-major state.
    #[inline]
    pub fn decode(&self, state: &[T], token: usize) -> Result<usize, LrnnError> {
        match self {
            Decoder::ArgmaxDot { prototypes } => {
                let mut best = 0;
                let mut best_val = T::neg_infinity();
                for (i, p) in prototypes.iter().enumerate() {
                    let v = p
                        .vector
                        .iter()
                        .zip(state)
                        .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                    if v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
                if !best_val.is_finite() {
                    return Err(LrnnError::Decode("non-finite state".into()));
                }
                Ok(prototypes[best].label)
            }
            Decoder::RoundReadout { reference } => {
                let n = reference.len();
                // state[π(i)] = reference[i], so π⁻¹(j) = index of state[j]
                let mut pi = vec![usize::MAX; n];
                for (j, &h) in state.iter().enumerate() {
                    let z = round_entry(h)?;
                    let i = reference
                        .iter()
                        .position(|&r| r == z)
                        .ok_or_else(|| LrnnError::Decode(format!("value {z} not in reference")))?;
                    if pi[i] != usize::MAX {
                        return Err(LrnnError::Decode(format!("value {z} repeated")));
                    }
                    pi[i] = j;
                }
                Ok(rank_of(&pi) as usize)
            }
            Decoder::PassThrough { num_labels } => pass_through(state[0], *num_labels),
            Decoder::PositionIndex => {
                let g = state
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (i, &h)| acc + T::c((i + 1) as f64) * h);
                let z = round_entry(g)? - 1;
                if z < 0 || z as usize >= state.len() {
                    return Err(LrnnError::Decode(format!("position {z} outside 0..{}", state.len())));
                }
                Ok(z as usize)
            }
            Decoder::PairWithToken { inner, card } => Ok(token * card + inner.decode(state, token)?),
        }
    }
}

/// Lexicographic rank of a one-line permutation given as a slice.
pub(crate) fn rank_of(p: &[usize]) -> u64 {
    let n = p.len();
    let mut rank = 0u64;
    for i in 0..n {
        let smaller_later = p[i + 1..].iter().filter(|&&x| x < p[i]).count() as u64;
        rank += smaller_later * factorial(n - 1 - i);
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::Permutation;

    #[test]
    fn argmax_ties_lowest_index() {
        let d = Decoder::ArgmaxDot {
            prototypes: vec![
                Prototype { vector: vec![1.0, 0.0], label: 7 },
                Prototype { vector: vec![1.0, 0.0], label: 3 },
            ],
        };
        assert_eq!(d.decode(&[1.0, 0.0], 0).unwrap(), 7);
    }

    #[test]
    fn round_readout_recovers_rank() {
        let d = Decoder::<f64>::RoundReadout { reference: vec![1, 2, 3, 4] };
        for r in 0..24 {
            let p = Permutation::unrank(r, 4).unwrap();
            let h = p.to_matrix::<f64>().matvec(&[1.0, 2.0, 3.0, 4.0]).unwrap();
            let noisy: Vec<f64> = h.iter().map(|x| x + 0.1).collect();
            assert_eq!(d.decode(&noisy, 0).unwrap() as u64, r);
        }
        assert!(d.decode(&[1.0, 2.0, 3.3, 4.0], 0).is_err());
        assert!(d.decode(&[1.0, 1.0, 3.0, 4.0], 0).is_err());
    }

    #[test]
    fn rank_of_matches_permutation_rank() {
        for p in crate::fsa::all_permutations(5) {
            assert_eq!(rank_of(p.as_slice()), p.rank());
        }
    }

    #[test]
    fn pass_through_and_pairs() {
        let d = Decoder::<f64>::PairWithToken {
            inner: Box::new(Decoder::PassThrough { num_labels: 2 }),
            card: 2,
        };
        assert_eq!(d.decode(&[1.0], 3).unwrap(), 7);
        assert!(d.decode(&[2.0], 0).is_err());
        assert!(d.decode(&[0.5], 0).is_err());
        assert_eq!(Decoder::<f64>::PositionIndex.decode(&[0.0, 0.0, 1.0], 0).unwrap(), 2);
    }
}
