//! Exact network weights for parity, cyclic counters, permutation groups,
//! the two-layer reflection adder, and permutation-reset cascades.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsa::{Cascade, Fsa, FsaError, LetterAction, Permutation};
use crate::linalg::{reflection2_vector, rotation2, rotation_as_householders, swap_householder, GhFactor, GhProduct, LinalgError, Matrix};
use crate::lrnn::{Decoder, EigenRange, LrnnError, LrnnLayer, LrnnModel, Prototype, Transition, ValidationOptions};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("modulus must be at least 2, got {0}")]
    Modulus(usize),
    #[error("no generators")]
    NoGenerators,
    #[error("transition monoid is not a group")]
    NotGroup,
    #[error(transparent)]
    Fsa(#[from] FsaError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lrnn(#[from] LrnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Eigenvalue range the emitted transitions must respect.
    pub range: EigenRange,
    /// Emit reset transitions as `n` axis factors with `β = 1` instead of the
    /// native zero transition.
    pub strict_gh: bool,
}

impl CompileOptions {
    fn validation(self) -> ValidationOptions {
        ValidationOptions {
            range: self.range,
            allow_unbounded: false,
        }
    }
}

fn finish<T: Scalar>(layers: Vec<LrnnLayer<T>>, opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    Ok(LrnnModel::new(layers, opts.validation())?)
}

fn one_hot<T: Scalar>(i: usize, n: usize) -> Matrix<T> {
    let mut v = vec![T::zero(); n];
    v[i] = T::one();
    Matrix::column(&v)
}

/// Scalar state, `h₀ = 0`, `a(0) = 1`, `a(1) = −1`, `b(0) = 0`, `b(1) = 1`.
pub fn compile_parity<T: Scalar>() -> Result<LrnnModel<T>, CompileError> {
    compile_parity_with(CompileOptions::default())
}

pub fn compile_parity_with<T: Scalar>(opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    let layer = LrnnLayer {
        transitions: vec![Transition::Scalar { a: T::one() }, Transition::Scalar { a: -T::one() }],
        inputs: vec![Matrix::column(&[T::zero()]), Matrix::column(&[T::one()])],
        h0: Matrix::column(&[T::zero()]),
        decoder: Decoder::PassThrough { num_labels: 2 },
        renormalize_every: 0,
    };
    finish(vec![layer], opts)
}

/// Steps between state renormalizations in compiled cyclic counters.
pub const CYCLIC_RENORMALIZE_EVERY: u64 = 1024;

/// Counter modulo `m` on a rotating 2-D state: letter `w` rotates by
/// `2πw/m` (as two reflections); outputs are read by nearest prototype
/// `R(2πi/m)·(1, 0)`.
pub fn compile_cyclic<T: Scalar>(m: usize) -> Result<LrnnModel<T>, CompileError> {
    compile_cyclic_with(m, CompileOptions::default())
}

pub fn compile_cyclic_with<T: Scalar>(m: usize, opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    if m < 2 {
        return Err(CompileError::Modulus(m));
    }
    let step = T::c(2.0 * std::f64::consts::PI / m as f64);
    let transitions = (0..m)
        .map(|w| {
            let product = if w == 0 {
                GhProduct::identity(2)
            } else {
                let (a, b) = rotation_as_householders(step * T::c(w as f64));
                GhProduct::new(2, vec![a, b])?
            };
            Ok(Transition::Gh { product })
        })
        .collect::<Result<Vec<_>, LinalgError>>()?;
    let h0 = Matrix::column(&[T::one(), T::zero()]);
    let prototypes = (0..m)
        .map(|i| Prototype {
            vector: rotation2(step * T::c(i as f64)).matvec(h0.as_slice()).expect("2x2"),
            label: i,
        })
        .collect();
    let mut layer = LrnnLayer::homogeneous(transitions, h0, Decoder::ArgmaxDot { prototypes });
    layer.renormalize_every = CYCLIC_RENORMALIZE_EVERY;
    finish(vec![layer], opts)
}

fn permutation_product<T: Scalar>(p: &Permutation) -> Result<GhProduct<T>, LinalgError> {
    let n = p.degree();
    let factors = p
        .to_transpositions()
        .into_iter()
        .map(|(i, j)| swap_householder(i, j, n))
        .collect::<Result<Vec<_>, _>>()?;
    GhProduct::new(n, factors)
}

/// Letter `w` permutes the state `(1, …, n)ᵀ` by `generators[w]`, as a
/// product of swap reflections; the output is the rank of the accumulated
/// permutation.
pub fn compile_permutation_group<T: Scalar>(generators: &[Permutation]) -> Result<LrnnModel<T>, CompileError> {
    compile_permutation_group_with(generators, CompileOptions::default())
}

pub fn compile_permutation_group_with<T: Scalar>(
    generators: &[Permutation],
    opts: CompileOptions,
) -> Result<LrnnModel<T>, CompileError> {
    let n = generators.first().ok_or(CompileError::NoGenerators)?.degree();
    let transitions = generators
        .iter()
        .map(|g| {
            if g.degree() != n {
                return Err(CompileError::Fsa(FsaError::DegreeMismatch(n, g.degree())));
            }
            Ok(Transition::Gh {
                product: permutation_product(g)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reference: Vec<i64> = (1..=n as i64).collect();
    let h0 = Matrix::column(&reference.iter().map(|&r| T::c(r as f64)).collect::<Vec<_>>());
    let layer = LrnnLayer::homogeneous(transitions, h0, Decoder::RoundReadout { reference });
    finish(vec![layer], opts)
}

/// An automaton whose letters all act bijectively, run on one-hot states;
/// the output is the automaton state.
pub fn compile_group_automaton<T: Scalar>(fsa: &Fsa, opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    fsa.validate()?;
    let n = fsa.num_states;
    let transitions = (0..fsa.alphabet_size)
        .map(|w| {
            let p = Permutation::new(fsa.letter_action(w)).map_err(|_| CompileError::NotGroup)?;
            Ok(Transition::Gh {
                product: permutation_product(&p)?,
            })
        })
        .collect::<Result<Vec<_>, CompileError>>()?;
    let layer = LrnnLayer::homogeneous(transitions, one_hot(fsa.start, n), Decoder::PositionIndex);
    finish(vec![layer], opts)
}

/// Two layers adding modulo `m` with reflections only. Layer 1 alternates
/// `h ← 1 − h` and emits `2x + h`; layer 2 reflects a 2-D state by an angle
/// depending on the digit and the parity bit, and decodes against the `2m`
/// prototypes at multiples of `π/m`.
pub fn compile_mod_reflections<T: Scalar>(m: usize) -> Result<LrnnModel<T>, CompileError> {
    compile_mod_reflections_with(m, CompileOptions::default())
}

pub fn compile_mod_reflections_with<T: Scalar>(m: usize, opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    if m < 2 {
        return Err(CompileError::Modulus(m));
    }
    let layer1 = LrnnLayer {
        transitions: vec![Transition::Scalar { a: -T::one() }; m],
        inputs: vec![Matrix::column(&[T::one()]); m],
        h0: Matrix::column(&[T::zero()]),
        decoder: Decoder::PairWithToken {
            inner: Box::new(Decoder::PassThrough { num_labels: 2 }),
            card: 2,
        },
        renormalize_every: 0,
    };
    let pi_m = T::PI() / T::c(m as f64);
    let mut transitions = Vec::with_capacity(2 * m);
    for i in 0..m {
        for h in 0..2 {
            let k = T::c(2.0 * i as f64);
            let theta = if h == 1 { (T::one() - k) * pi_m } else { (T::one() + k) * pi_m };
            let f = GhFactor::new(reflection2_vector(theta), T::c(2.0))?;
            transitions.push(Transition::Gh {
                product: GhProduct::new(2, vec![f])?,
            });
        }
    }
    let d0 = [T::one(), T::zero()];
    let c0 = crate::linalg::reflection2(pi_m).matvec(&d0)?;
    let mut prototypes = Vec::with_capacity(2 * m);
    for i in 0..m {
        let turn = T::c(2.0 * i as f64) * pi_m;
        prototypes.push(Prototype {
            vector: rotation2(turn).matvec(&d0)?,
            label: i,
        });
        prototypes.push(Prototype {
            vector: rotation2(-turn).matvec(&c0)?,
            label: i,
        });
    }
    let layer2 = LrnnLayer::homogeneous(transitions, Matrix::column(&d0), Decoder::ArgmaxDot { prototypes });
    finish(vec![layer1, layer2], opts)
}

/// One layer per cascade level on one-hot states. Permutation letters become
/// products of swap reflections with no input; reset letters zero the state
/// and write the target state as input. Each layer emits
/// `token·n + state`, which is the next level's letter.
pub fn cascade_to_lrnn<T: Scalar>(c: &Cascade, opts: CompileOptions) -> Result<LrnnModel<T>, CompileError> {
    c.validate()?;
    let mut layers = Vec::with_capacity(c.layers.len());
    for (level, (cl, alphabet)) in c.layers.iter().zip(c.layer_alphabets()).enumerate() {
        let n = cl.num_states;
        let mut transitions = Vec::with_capacity(alphabet);
        let mut inputs = Vec::with_capacity(alphabet);
        for w in 0..alphabet {
            match cl.action(w) {
                Some(LetterAction::Permute(p)) => {
                    transitions.push(Transition::Gh {
                        product: permutation_product(&p)?,
                    });
                    inputs.push(Matrix::zeros(n, 1));
                }
                Some(LetterAction::Reset(q)) => {
                    transitions.push(if opts.strict_gh {
                        let factors = (0..n)
                            .map(|i| GhFactor::axis(i, n, T::one()))
                            .collect::<Result<Vec<_>, _>>()?;
                        Transition::Gh {
                            product: GhProduct::new(n, factors)?,
                        }
                    } else {
                        Transition::Zero
                    });
                    inputs.push(one_hot(q, n));
                }
                None => return Err(FsaError::NotPermutationReset { layer: level, letter: w }.into()),
            }
        }
        layers.push(LrnnLayer {
            transitions,
            inputs,
            h0: one_hot(cl.start, n),
            decoder: Decoder::PairWithToken {
                inner: Box::new(Decoder::PositionIndex),
                card: n,
            },
            renormalize_every: 0,
        });
    }
    finish(layers, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsa::{all_permutations, word_problem_oracle, Group};
    use crate::lrnn::model_run;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn running_sum(word: &[usize], m: usize) -> Vec<usize> {
        let mut s = 0;
        word.iter()
            .map(|&x| {
                s = (s + x) % m;
                s
            })
            .collect()
    }

    #[test]
    fn parity_examples() {
        let p = compile_parity::<f64>().unwrap();
        assert_eq!(model_run(&p, &[1]).unwrap(), vec![1]);
        assert_eq!(model_run(&p, &[1, 1]).unwrap(), vec![1, 0]);
        assert_eq!(model_run(&p, &[0, 1, 1, 0]).unwrap(), vec![0, 1, 0, 0]);
        assert!(model_run(&p, &[]).unwrap().is_empty());
    }

    #[test]
    fn unit_interval_rejects_parity_and_cyclic() {
        let unit = CompileOptions {
            range: EigenRange::UnitInterval,
            strict_gh: false,
        };
        assert!(compile_parity_with::<f64>(unit).is_err());
        for m in [2, 3, 7] {
            assert!(compile_cyclic_with::<f64>(m, unit).is_err());
        }
    }

    #[test]
    fn cyclic_examples() {
        let z2 = compile_cyclic::<f64>(2).unwrap();
        assert_eq!(model_run(&z2, &[1, 1, 1]).unwrap(), vec![1, 0, 1]);
        let z5 = compile_cyclic::<f64>(5).unwrap();
        assert_eq!(model_run(&z5, &[3, 2, 4]).unwrap(), vec![3, 0, 4]);
        assert!(matches!(compile_cyclic::<f64>(1), Err(CompileError::Modulus(1))));
    }

    #[test]
    fn cyclic_generator_has_order_m() {
        for m in [3usize, 7, 60] {
            let z = compile_cyclic::<f64>(m).unwrap();
            let a = z.layers[0].transitions[1].to_matrix(2);
            let p = a.pow(m as u64).unwrap();
            assert!(p.max_abs_diff(&Matrix::identity(2)) <= 1e-9 * m as f64);
        }
    }

    #[test]
    fn s3_exhaustive_short_words() {
        let gens = all_permutations(3);
        let model = compile_permutation_group::<f64>(&gens).unwrap();
        let mut words: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..4 {
            words = words
                .iter()
                .flat_map(|w| (0..6).map(move |x| [w.clone(), vec![x]].concat()))
                .collect();
            for w in &words {
                let oracle = word_problem_oracle(Group::Symmetric { n: 3 }, w).unwrap();
                assert_eq!(model_run(&model, w).unwrap(), oracle);
            }
        }
    }

    #[test]
    fn swap_generators_use_one_factor() {
        let gens: Vec<Permutation> = all_permutations(5).into_iter().filter(|p| p.moved_points() <= 2).collect();
        assert_eq!(gens.len(), 11);
        let model = compile_permutation_group::<f64>(&gens).unwrap();
        for t in model.transitions() {
            match t {
                Transition::Gh { product } => assert!(product.len() <= 1),
                other => panic!("{other:?}"),
            }
        }
        let ident = gens.iter().position(Permutation::is_identity).unwrap();
        assert_eq!(model_run(&model, &[ident; 5]).unwrap(), vec![0; 5]);
    }

    #[test]
    fn mod_reflections_examples() {
        let m3 = compile_mod_reflections::<f64>(3).unwrap();
        assert_eq!(model_run(&m3, &[1, 2, 2, 1]).unwrap(), vec![1, 0, 2, 0]);
        let m5 = compile_mod_reflections::<f64>(5).unwrap();
        assert_eq!(model_run(&m5, &[0; 9]).unwrap(), vec![0; 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m12 = compile_mod_reflections::<f64>(12).unwrap();
        let w: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..12)).collect();
        assert_eq!(model_run(&m12, &w).unwrap(), running_sum(&w, 12));
    }

    #[test]
    fn mod_reflection_transitions_are_involutions() {
        let m = compile_mod_reflections::<f64>(7).unwrap();
        for t in &m.layers[1].transitions {
            let a = t.to_matrix(2);
            assert!(a.matmul(&a).unwrap().max_abs_diff(&Matrix::identity(2)) <= 1e-12);
        }
    }

    #[test]
    fn cascades_match_direct_simulation() {
        for c in [Cascade::parity(), Cascade::no_double_zero()] {
            for strict in [false, true] {
                let opts = CompileOptions {
                    strict_gh: strict,
                    ..Default::default()
                };
                let model = cascade_to_lrnn::<f64>(&c, opts).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                for _ in 0..50 {
                    let w: Vec<usize> = (0..30).map(|_| rng.gen_range(0..2)).collect();
                    let want: Vec<usize> = c
                        .run(&w)
                        .unwrap()
                        .iter()
                        .zip(&w)
                        .map(|(j, &x)| c.encode(x, j))
                        .collect();
                    assert_eq!(model_run(&model, &w).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn permutation_only_cascade_has_no_inputs() {
        let model = cascade_to_lrnn::<f64>(&Cascade::parity(), CompileOptions::default()).unwrap();
        assert!(model.layers[0].inputs.iter().all(|b| b.as_slice().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn group_automaton_tracks_state() {
        let f = Fsa::cyclic_counter(4).unwrap();
        let model = compile_group_automaton::<f64>(&f, CompileOptions::default()).unwrap();
        let w = [1, 3, 2, 2, 1];
        assert_eq!(model_run(&model, &w).unwrap(), f.run(&w).unwrap()[1..]);
        let reset = Fsa::new(2, 2, 0, vec![vec![0, 0], vec![1, 0]]).unwrap();
        assert!(matches!(
            compile_group_automaton::<f64>(&reset, CompileOptions::default()),
            Err(CompileError::NotGroup)
        ));
    }
}
