use serde::{Deserialize, Serialize};

use super::{is_bijection, Fsa, FsaError, Permutation};

/// How one letter acts on a permutation-reset layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LetterAction {
    Permute(Permutation),
    Reset(usize),
}

/// One level of a cascade; `delta[state][letter]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeLayer {
    pub num_states: usize,
    pub start: usize,
    pub delta: Vec<Vec<usize>>,
}

/// A cascade of permutation-reset automata.
///
/// Level 0 reads the input letter `w`. Level `i > 0` reads the letter
/// `c_i = c_{i-1}·n_{i-1} + q_{i-1}`, with `c_0 = w` and `q_{i-1}` the state
/// level `i − 1` has just moved into at the same position. So level `i` sees
/// the input letter and every state below it, and its alphabet has
/// `|Σ|·n_0·…·n_{i-1}` letters.
///
/// JSON: `{"alphabet_size":2,"layers":[{"num_states":2,"start":0,"delta":[[0,1],[1,0]]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cascade {
    pub alphabet_size: usize,
    pub layers: Vec<CascadeLayer>,
}

impl CascadeLayer {
    pub fn alphabet_size(&self) -> usize {
        self.delta.first().map_or(0, Vec::len)
    }

    pub fn action(&self, letter: usize) -> Option<LetterAction> {
        let f: Vec<usize> = self.delta.iter().map(|row| row[letter]).collect();
        if is_bijection(&f) {
            return Some(LetterAction::Permute(Permutation::new(f).expect("bijection")));
        }
        if f.iter().all(|&q| q == f[0]) {
            return Some(LetterAction::Reset(f[0]));
        }
        None
    }
}

impl Cascade {
    pub fn new(alphabet_size: usize, layers: Vec<CascadeLayer>) -> Result<Self, FsaError> {
        let c = Self { alphabet_size, layers };
        c.validate()?;
        Ok(c)
    }

    /// Alphabet size seen by each level.
    pub fn layer_alphabets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut a = self.alphabet_size;
        for l in &self.layers {
            out.push(a);
            a *= l.num_states;
        }
        out
    }

    pub fn validate(&self) -> Result<(), FsaError> {
        if self.alphabet_size == 0 || self.layers.is_empty() {
            return Err(FsaError::Empty);
        }
        for (i, (layer, alpha)) in self.layers.iter().zip(self.layer_alphabets()).enumerate() {
            Fsa::new(alpha, layer.num_states, layer.start, layer.delta.clone())?;
            for w in 0..alpha {
                if layer.action(w).is_none() {
                    return Err(FsaError::NotPermutationReset { layer: i, letter: w });
                }
            }
        }
        Ok(())
    }

    /// Joint states `(q_0, …, q_{L-1})` after each letter.
    pub fn run(&self, word: &[usize]) -> Result<Vec<Vec<usize>>, FsaError> {
        let mut q: Vec<usize> = self.layers.iter().map(|l| l.start).collect();
        let mut out = Vec::with_capacity(word.len());
        for &w in word {
            if w >= self.alphabet_size {
                return Err(FsaError::LetterOutOfRange {
                    letter: w,
                    alphabet: self.alphabet_size,
                });
            }
            let mut code = w;
            for (i, layer) in self.layers.iter().enumerate() {
                q[i] = layer.delta[q[i]][code];
                code = code * layer.num_states + q[i];
            }
            out.push(q.clone());
        }
        Ok(out)
    }

    /// Mixed-radix code of a letter and the joint state it leads to; this is
    /// what the compiled network emits at each position.
    pub fn encode(&self, letter: usize, joint: &[usize]) -> usize {
        self.layers
            .iter()
            .zip(joint)
            .fold(letter, |code, (l, &q)| code * l.num_states + q)
    }

    /// Inverse of [`Cascade::encode`]: `(letter, joint state)`.
    pub fn decode(&self, mut code: usize) -> (usize, Vec<usize>) {
        let mut joint = vec![0; self.layers.len()];
        for (i, l) in self.layers.iter().enumerate().rev() {
            joint[i] = code % l.num_states;
            code /= l.num_states;
        }
        (code, joint)
    }

    /// Single level: the parity automaton.
    pub fn parity() -> Self {
        let p = Fsa::parity();
        Self::new(
            2,
            vec![CascadeLayer {
                num_states: 2,
                start: 0,
                delta: p.delta,
            }],
        )
        .expect("valid")
    }

    /// Two levels recognizing binary words without two consecutive zeros.
    /// Level 0 tracks the parity of the current run of zeros (letter 1
    /// resets it, letter 0 toggles). Level 1 is a flag that latches to 1 as
    /// soon as a zero brings the run parity back to even, i.e. at the second
    /// zero of a run. A word is accepted iff the flag is 0.
    pub fn no_double_zero() -> Self {
        let level0 = CascadeLayer {
            num_states: 2,
            start: 0,
            delta: vec![vec![1, 0], vec![0, 0]],
        };
        // letter code = 2·w + q0
        let level1 = CascadeLayer {
            num_states: 2,
            start: 0,
            delta: vec![vec![1, 0, 0, 0], vec![1, 1, 1, 1]],
        };
        Self::new(2, vec![level0, level1]).expect("valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has_double_zero(w: &[usize]) -> bool {
        w.windows(2).any(|p| p == [0, 0])
    }

    #[test]
    fn parity_cascade_matches_fsa() {
        let c = Cascade::parity();
        let f = Fsa::parity();
        let w = [1, 0, 1, 1, 0, 1];
        let got: Vec<usize> = c.run(&w).unwrap().into_iter().map(|j| j[0]).collect();
        assert_eq!(got, f.run(&w).unwrap()[1..]);
    }

    #[test]
    fn no_double_zero_recognizes_language() {
        let c = Cascade::no_double_zero();
        for len in 0..=10 {
            for bits in 0..(1u32 << len) {
                let w: Vec<usize> = (0..len).map(|i| ((bits >> i) & 1) as usize).collect();
                let states = c.run(&w).unwrap();
                for k in 1..=len {
                    let flag = states[k - 1][1];
                    assert_eq!(flag == 1, has_double_zero(&w[..k]), "{w:?}");
                }
            }
        }
    }

    #[test]
    fn encode_decode_roundtrip() {
        let c = Cascade::no_double_zero();
        for w in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let code = c.encode(w, &[a, b]);
                    assert!(code < 8);
                    assert_eq!(c.decode(code), (w, vec![a, b]));
                }
            }
        }
    }

    #[test]
    fn rejects_non_permutation_reset() {
        let layer = CascadeLayer {
            num_states: 3,
            start: 0,
            delta: vec![vec![0], vec![0], vec![1]],
        };
        assert!(matches!(
            Cascade::new(1, vec![layer]),
            Err(FsaError::NotPermutationReset { layer: 0, letter: 0 })
        ));
    }

    #[test]
    fn rejects_wrong_alphabet_width() {
        let l0 = Cascade::parity().layers[0].clone();
        // second level must read 4 letters
        let bad = CascadeLayer {
            num_states: 2,
            start: 0,
            delta: vec![vec![0, 1], vec![1, 0]],
        };
        assert!(Cascade::new(2, vec![l0, bad]).is_err());
    }
}
