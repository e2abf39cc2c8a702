//! Finite-state automata, permutations, permutation-reset cascades, transition
//! monoids and brute-force word-problem oracles.

mod cascade;
mod permutation;

pub use cascade::{Cascade, CascadeLayer, LetterAction};
pub use permutation::{all_permutations, factorial, Permutation, MAX_RANK_DEGREE};

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FsaError {
    #[error("letter {letter} outside alphabet of size {alphabet}")]
    LetterOutOfRange { letter: usize, alphabet: usize },
    #[error("state {state} outside 0..{num_states}")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("transition table has {found} rows/columns, expected {expected}")]
    TableShape { expected: usize, found: usize },
    #[error("empty alphabet or state set")]
    Empty,
    #[error("mapping is not a bijection")]
    NotBijective,
    #[error("permutation degrees differ: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("degree {0} too large for ranking")]
    DegreeTooLarge(usize),
    #[error("rank {rank} out of range for degree {degree}")]
    RankOutOfRange { rank: u64, degree: usize },
    #[error("transition monoid exceeds {0} elements")]
    MonoidTooLarge(usize),
    #[error("layer {layer}, letter {letter}: transition is neither a permutation nor a reset")]
    NotPermutationReset { layer: usize, letter: usize },
    #[error("invalid group element {element} for {group}")]
    InvalidElement { element: usize, group: String },
    #[error("invalid group: {0}")]
    InvalidGroup(String),
}

/// Deterministic automaton `(Σ, Q, q₀, δ)` with `Σ = 0..alphabet_size` and
/// `Q = 0..num_states`.
///
/// JSON: `{"alphabet_size":2,"num_states":2,"start":0,"delta":[[0,1],[1,0]]}`
/// where `delta[state][letter]` is the next state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fsa {
    pub alphabet_size: usize,
    pub num_states: usize,
    pub start: usize,
    pub delta: Vec<Vec<usize>>,
}

pub const DEFAULT_MONOID_CAP: usize = 10_000;

/// Closure of the letter actions under composition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMonoid {
    /// State maps `q ↦ δ(q, w)`, identity first, in discovery order.
    pub elements: Vec<Vec<usize>>,
    pub is_group: bool,
}

impl TransitionMonoid {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

impl Fsa {
    pub fn new(alphabet_size: usize, num_states: usize, start: usize, delta: Vec<Vec<usize>>) -> Result<Self, FsaError> {
        let a = Self {
            alphabet_size,
            num_states,
            start,
            delta,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), FsaError> {
        if self.alphabet_size == 0 || self.num_states == 0 {
            return Err(FsaError::Empty);
        }
        if self.start >= self.num_states {
            return Err(FsaError::StateOutOfRange {
                state: self.start,
                num_states: self.num_states,
            });
        }
        if self.delta.len() != self.num_states {
            return Err(FsaError::TableShape {
                expected: self.num_states,
                found: self.delta.len(),
            });
        }
        for row in &self.delta {
            if row.len() != self.alphabet_size {
                return Err(FsaError::TableShape {
                    expected: self.alphabet_size,
                    found: row.len(),
                });
            }
            if let Some(&s) = row.iter().find(|&&s| s >= self.num_states) {
                return Err(FsaError::StateOutOfRange {
                    state: s,
                    num_states: self.num_states,
                });
            }
        }
        Ok(())
    }

    /// The two-state parity automaton: letter 1 toggles, letter 0 keeps.
    pub fn parity() -> Self {
        Self::new(2, 2, 0, vec![vec![0, 1], vec![1, 0]]).expect("valid")
    }

    /// Counter modulo `m` over letters `0..m` (letter `w` adds `w`).
    pub fn cyclic_counter(m: usize) -> Result<Self, FsaError> {
        let delta = (0..m).map(|q| (0..m).map(|w| (q + w) % m).collect()).collect();
        Self::new(m, m, 0, delta)
    }

    /// Automaton whose letters act on `0..n` by the given permutations.
    pub fn from_permutations(gens: &[Permutation]) -> Result<Self, FsaError> {
        let n = gens.first().ok_or(FsaError::Empty)?.degree();
        for g in gens {
            if g.degree() != n {
                return Err(FsaError::DegreeMismatch(n, g.degree()));
            }
        }
        let delta = (0..n).map(|q| gens.iter().map(|g| g.apply(q)).collect()).collect();
        Self::new(gens.len(), n, 0, delta)
    }

    pub fn step(&self, q: usize, letter: usize) -> Result<usize, FsaError> {
        if letter >= self.alphabet_size {
            return Err(FsaError::LetterOutOfRange {
                letter,
                alphabet: self.alphabet_size,
            });
        }
        Ok(self.delta[q][letter])
    }

    /// States after every prefix, starting with the empty prefix.
    pub fn run(&self, word: &[usize]) -> Result<Vec<usize>, FsaError> {
        let mut out = Vec::with_capacity(word.len() + 1);
        let mut q = self.start;
        out.push(q);
        for &w in word {
            q = self.step(q, w)?;
            out.push(q);
        }
        Ok(out)
    }

    /// The map `q ↦ δ(q, letter)`.
    pub fn letter_action(&self, letter: usize) -> Vec<usize> {
        self.delta.iter().map(|row| row[letter]).collect()
    }

    pub fn transition_monoid(&self, max_size: usize) -> Result<TransitionMonoid, FsaError> {
        let gens: Vec<Vec<usize>> = (0..self.alphabet_size).map(|w| self.letter_action(w)).collect();
        let identity: Vec<usize> = (0..self.num_states).collect();
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut elements = Vec::new();
        let mut queue = VecDeque::new();
        seen.insert(identity.clone());
        elements.push(identity.clone());
        queue.push_back(identity);
        while let Some(f) = queue.pop_front() {
            for g in &gens {
                // apply f, then the letter
                let h: Vec<usize> = f.iter().map(|&q| g[q]).collect();
                if seen.insert(h.clone()) {
                    if elements.len() >= max_size {
                        return Err(FsaError::MonoidTooLarge(max_size));
                    }
                    elements.push(h.clone());
                    queue.push_back(h);
                }
            }
        }
        let is_group = elements.iter().all(|f| is_bijection(f));
        Ok(TransitionMonoid { elements, is_group })
    }
}

pub(crate) fn is_bijection(f: &[usize]) -> bool {
    let mut seen = vec![false; f.len()];
    for &x in f {
        if x >= f.len() || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

/// Groups with a canonical integer encoding of their elements: residues for
/// `Z_m`, lexicographic ranks for `S_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Group {
    Cyclic { m: usize },
    Symmetric { n: usize },
}

impl Group {
    pub fn validate(&self) -> Result<(), FsaError> {
        match *self {
            Group::Cyclic { m } if m >= 1 => Ok(()),
            Group::Symmetric { n } if (1..=MAX_RANK_DEGREE).contains(&n) => Ok(()),
            g => Err(FsaError::InvalidGroup(g.to_string())),
        }
    }

    pub fn order(&self) -> u64 {
        match *self {
            Group::Cyclic { m } => m as u64,
            Group::Symmetric { n } => factorial(n),
        }
    }

    pub fn identity(&self) -> usize {
        0
    }

    fn check(&self, x: usize) -> Result<(), FsaError> {
        if (x as u64) < self.order() {
            Ok(())
        } else {
            Err(FsaError::InvalidElement {
                element: x,
                group: self.to_string(),
            })
        }
    }

    /// Encoded product "apply `first`, then `then`".
    pub fn then(&self, first: usize, then: usize) -> Result<usize, FsaError> {
        self.check(first)?;
        self.check(then)?;
        match *self {
            Group::Cyclic { m } => Ok((first + then) % m),
            Group::Symmetric { n } => {
                let a = Permutation::unrank(first as u64, n)?;
                let b = Permutation::unrank(then as u64, n)?;
                Ok(b.compose(&a)?.rank() as usize)
            }
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::Cyclic { m } => write!(f, "Z{m}"),
            Group::Symmetric { n } => write!(f, "S{n}"),
        }
    }
}

/// Prefix products: output `i` encodes the product of elements `0..=i`,
/// applied in order (element 0 acts first).
pub fn word_problem_oracle(group: Group, word: &[usize]) -> Result<Vec<usize>, FsaError> {
    group.validate()?;
    match group {
        Group::Cyclic { m } => {
            let mut acc = 0usize;
            word.iter()
                .map(|&x| {
                    group.check(x)?;
                    acc = (acc + x) % m;
                    Ok(acc)
                })
                .collect()
        }
        Group::Symmetric { n } => {
            let mut acc = Permutation::identity(n);
            word.iter()
                .map(|&x| {
                    group.check(x)?;
                    let p = Permutation::unrank(x as u64, n)?;
                    acc = p.compose(&acc)?;
                    Ok(acc.rank() as usize)
                })
                .collect()
        }
    }
}
