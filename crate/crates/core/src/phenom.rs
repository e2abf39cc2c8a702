//! Finite-precision dynamics on constant inputs `1^k`: eventual periodicity
//! of cast state sequences and the period each eigenvalue regime allows.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{rotation_as_householders, GhFactor, GhProduct, LinalgError, Matrix};
use crate::lrnn::{layer_trajectory, Decoder, LrnnError, LrnnLayer, Transition};
use crate::precision::{CastGrid, PrecisionError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhenomError {
    #[error("empty state sequence")]
    Empty,
    #[error("layer does not match the requested regime: {0}")]
    KindMismatch(String),
    #[error("power-cast mode needs scalar or diagonal transitions")]
    PowerCastUnsupported,
    #[error(transparent)]
    Lrnn(#[from] LrnnError),
    #[error(transparent)]
    Precision(#[from] PrecisionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Smallest `p ≤ max_period` and earliest `t₀` with `states[t] = states[t+p]`
/// for every `t ≥ t₀` up to the end, confirmed over at least `3p` steps.
pub fn eventual_period<S: PartialEq>(states: &[S], max_period: usize) -> Result<Option<(usize, usize)>, PhenomError> {
    if states.is_empty() {
        return Err(PhenomError::Empty);
    }
    let len = states.len();
    for p in 1..=max_period.min(len - 1) {
        // walk back from the end while the shift-by-p match holds
        let mut t0 = len - p;
        while t0 > 0 && states[t0 - 1] == states[t0 - 1 + p] {
            t0 -= 1;
        }
        if len - p - t0 >= 3 * p {
            return Ok(Some((t0, p)));
        }
    }
    Ok(None)
}

/// Eigenvalue regime of `A(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemoKind {
    /// Real eigenvalues in `[0, 1]`: the cast sequence must settle (period 1).
    PositiveEigs,
    /// Real eigenvalues in `[−1, 1]`, some negative: period at most 2.
    NegativeReal,
    /// 2-D rotation by `2π/m`: period `m`.
    Rotation { m: usize },
}

/// How finite precision enters the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CastMode {
    /// Cast the state after every step.
    #[default]
    PerStep,
    /// `Ĥ_k = cast(Σ_{i<k} cast(A^i·B) + cast(A^k·H₀))` with an exact sum;
    /// scalar and diagonal transitions only.
    PowerCast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub kind: DemoKind,
    pub mode: CastMode,
    pub k_max: usize,
    pub tail_start: Option<usize>,
    pub period: Option<usize>,
    /// `pass`, `fail`, or `no_period`.
    pub verdict: String,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

pub const DEFAULT_MAX_PERIOD: usize = 64;

/// Token whose repeated application the demonstrations study.
pub const DEMO_TOKEN: usize = 1;

const EIG_TOL: f64 = 1e-8;

fn check_kind<T: Scalar>(kind: DemoKind, layer: &LrnnLayer<T>) -> Result<(), PhenomError> {
    let a = layer
        .transitions
        .get(DEMO_TOKEN)
        .ok_or_else(|| PhenomError::KindMismatch("layer has no token 1".into()))?;
    let n = layer.state_dim();
    match kind {
        DemoKind::PositiveEigs | DemoKind::NegativeReal => {
            let eig = a.eigenvalues(n)?;
            if eig.iter().any(|z| z.im.abs() > EIG_TOL) {
                return Err(PhenomError::KindMismatch("complex eigenvalue".into()));
            }
            let lo = if kind == DemoKind::PositiveEigs { 0.0 } else { -1.0 };
            if eig.iter().any(|z| z.re < lo - EIG_TOL || z.re > 1.0 + EIG_TOL) {
                return Err(PhenomError::KindMismatch(format!("eigenvalue outside [{lo}, 1]")));
            }
            Ok(())
        }
        DemoKind::Rotation { m } => {
            if n != 2 || m == 0 {
                return Err(PhenomError::KindMismatch("rotation needs a 2-D state".into()));
            }
            let r = a.to_matrix(2);
            let det = r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)];
            if !r.is_orthogonal(T::tol(1e-9)) || (det.f64() - 1.0).abs() > 1e-9 {
                return Err(PhenomError::KindMismatch("A(1) is not a rotation".into()));
            }
            Ok(())
        }
    }
}

/// States under the proof semantics for scalar/diagonal `A(1)`.
pub fn power_cast_trajectory<T: Scalar>(layer: &LrnnLayer<T>, k_max: usize, grid: &CastGrid<T>) -> Result<Vec<Vec<T>>, PhenomError> {
    let (n, d) = layer.h0.shape();
    let diag: Vec<T> = match layer.transitions.get(DEMO_TOKEN) {
        Some(Transition::Scalar { a }) => vec![*a; n],
        Some(Transition::Diagonal { diag }) => diag.clone(),
        Some(Transition::Zero) => vec![T::zero(); n],
        _ => return Err(PhenomError::PowerCastUnsupported),
    };
    let b = layer.inputs[DEMO_TOKEN].as_slice();
    let h0 = layer.h0.as_slice();
    let mut sum = vec![T::zero(); n * d];
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut h = vec![T::zero(); n * d];
        for i in 0..n {
            let a = diag[i];
            // A^{k-1}·B joins the sum; A^k·H₀ is added afresh
            let pow_prev = a.powi((k - 1) as i32);
            let pow_k = a.powi(k as i32);
            for c in 0..d {
                let idx = i * d + c;
                sum[idx] = sum[idx] + grid.cast(pow_prev * b[idx])?;
                h[idx] = grid.cast(sum[idx] + grid.cast(pow_k * h0[idx])?)?;
            }
        }
        out.push(h);
    }
    Ok(out)
}

/// Runs `1^{k_max}` through `layer` in finite precision and checks the
/// detected eventual period against the regime.
pub fn demo_theorem<T: Scalar>(
    kind: DemoKind,
    layer: &LrnnLayer<T>,
    grid: &CastGrid<T>,
    k_max: usize,
    mode: CastMode,
) -> Result<DemoReport, PhenomError> {
    check_kind(kind, layer)?;
    let states = match mode {
        CastMode::PerStep => layer_trajectory(layer, &vec![DEMO_TOKEN; k_max], Some(grid))?,
        CastMode::PowerCast => power_cast_trajectory(layer, k_max, grid)?,
    };
    let max_period = match kind {
        DemoKind::Rotation { m } => DEFAULT_MAX_PERIOD.max(2 * m),
        _ => DEFAULT_MAX_PERIOD,
    };
    let found = eventual_period(&states, max_period)?;
    let verdict = match found {
        None => "no_period",
        Some((_, p)) => {
            let ok = match kind {
                DemoKind::PositiveEigs => p == 1,
                DemoKind::NegativeReal => p <= 2,
                DemoKind::Rotation { m } => p == m,
            };
            if ok {
                "pass"
            } else {
                "fail"
            }
        }
    };
    Ok(DemoReport {
        kind,
        mode,
        k_max,
        tail_start: found.map(|f| f.0),
        period: found.map(|f| f.1),
        verdict: verdict.to_string(),
    })
}

fn demo_layer<T: Scalar>(a: Transition<T>, b: Matrix<T>, h0: Matrix<T>) -> LrnnLayer<T> {
    let n = h0.rows();
    let d = h0.cols();
    LrnnLayer {
        transitions: vec![Transition::identity(), a],
        inputs: vec![Matrix::zeros(n, d), b],
        h0,
        decoder: Decoder::ArgmaxDot {
            prototypes: vec![crate::lrnn::Prototype {
                vector: vec![T::zero(); n * d],
                label: 0,
            }],
        },
        renormalize_every: 0,
    }
}

/// Layer with scalar `A(1) = a` and `B(1) = b`, from `h₀ = 0`.
pub fn scalar_demo_layer<T: Scalar>(a: T, b: T) -> LrnnLayer<T> {
    demo_layer(Transition::Scalar { a }, Matrix::column(&[b]), Matrix::column(&[T::zero()]))
}

/// Layer with `A(1)` the rotation by `2π/m` (as two reflections), `B = 0`,
/// `h₀ = (1, 0)`.
pub fn rotation_demo_layer<T: Scalar>(m: usize) -> Result<LrnnLayer<T>, PhenomError> {
    let (f1, f2) = rotation_as_householders(T::c(2.0 * std::f64::consts::PI / m as f64));
    Ok(demo_layer(
        Transition::Gh {
            product: GhProduct::new(2, vec![f1, f2])?,
        },
        Matrix::column(&[T::zero(), T::zero()]),
        Matrix::column(&[T::one(), T::zero()]),
    ))
}

fn random_column<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Matrix<T> {
    Matrix::column(&(0..n).map(|_| T::c(rng.gen_range(-1.0..1.0))).collect::<Vec<_>>())
}

/// Random layer whose `A(1)` has real eigenvalues in `[0, 1]`: a diagonal
/// with entries in `[0, 1]`, or (`gh = true`) one or two GH factors with
/// `β ∈ [0, 1]`.
pub fn random_positive_layer<T: Scalar, R: Rng>(rng: &mut R, n: usize, gh: bool) -> Result<LrnnLayer<T>, PhenomError> {
    let a = if gh {
        let k = rng.gen_range(1..=2);
        let factors = (0..k)
            .map(|_| {
                let v: Vec<T> = (0..n).map(|_| T::c(rng.gen_range(-1.0..1.0))).collect();
                GhFactor::normalized(v, T::c(rng.gen_range(0.0..=1.0)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Transition::Gh {
            product: GhProduct::new(n, factors)?,
        }
    } else {
        Transition::Diagonal {
            diag: (0..n).map(|_| T::c(rng.gen_range(0.0..=1.0))).collect(),
        }
    };
    Ok(demo_layer(a, random_column(rng, n), random_column(rng, n)))
}

/// Random diagonal layer with entries in `[−1, 1]`, at least one negative.
pub fn random_negative_layer<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> LrnnLayer<T> {
    let mut diag: Vec<T> = (0..n).map(|_| T::c(rng.gen_range(-1.0..=1.0))).collect();
    let i = rng.gen_range(0..n);
    diag[i] = T::c(rng.gen_range(-1.0..0.0));
    demo_layer(Transition::Diagonal { diag }, random_column(rng, n), random_column(rng, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn period_examples() {
        assert_eq!(eventual_period(&[4; 10], 5).unwrap(), Some((0, 1)));
        let alt: Vec<u8> = (0..12).map(|i| (i % 2) as u8).collect();
        assert_eq!(eventual_period(&alt, 5).unwrap(), Some((0, 2)));
        let tail = [9, 8, 7, 1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3];
        assert_eq!(eventual_period(&tail, 5).unwrap(), Some((3, 3)));
        assert_eq!(eventual_period(&[1, 2, 3, 4], 3).unwrap(), None);
        assert!(eventual_period::<u8>(&[], 3).is_err());
    }

    #[test]
    fn needs_three_confirmed_periods() {
        // period 2 seen only 2.5 times
        assert_eq!(eventual_period(&[0, 5, 6, 5, 6, 5, 6], 2).unwrap(), None);
        assert_eq!(eventual_period(&[0, 5, 6, 5, 6, 5, 6, 5, 6], 2).unwrap(), Some((1, 2)));
    }

    #[test]
    fn demo_examples() {
        let g = CastGrid::<f64>::default_demo();
        for mode in [CastMode::PerStep, CastMode::PowerCast] {
            let r = demo_theorem(DemoKind::PositiveEigs, &scalar_demo_layer(0.9, 0.1), &g, 10_000, mode).unwrap();
            assert_eq!(r.period, Some(1), "{mode:?}");
            assert!(r.passed());
            let r = demo_theorem(DemoKind::NegativeReal, &scalar_demo_layer(-1.0, 1.0), &g, 10_000, mode).unwrap();
            assert_eq!(r.period, Some(2), "{mode:?}");
        }
        let rot = rotation_demo_layer::<f64>(3).unwrap();
        let r = demo_theorem(DemoKind::Rotation { m: 3 }, &rot, &g, 10_000, CastMode::PerStep).unwrap();
        assert_eq!(r.period, Some(3));
        assert!(demo_theorem(DemoKind::Rotation { m: 3 }, &rot, &g, 100, CastMode::PowerCast).is_err());
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let g = CastGrid::<f64>::default_demo();
        let neg = scalar_demo_layer(-0.5, 0.1);
        assert!(matches!(
            demo_theorem(DemoKind::PositiveEigs, &neg, &g, 100, CastMode::PerStep),
            Err(PhenomError::KindMismatch(_))
        ));
    }

    #[test]
    fn power_cast_matches_closed_form() {
        let g = CastGrid::<f64>::uniform(-8.0, 8.0, 1.0 / 1024.0).unwrap();
        let layer = scalar_demo_layer(0.5, 1.0);
        let states = power_cast_trajectory(&layer, 5, &g).unwrap();
        // Σ_{i<k} 0.5^i are all on the grid for small k
        let want = [1.0, 1.5, 1.75, 1.875, 1.9375];
        for (s, w) in states.iter().zip(want) {
            assert_eq!(s[0], w);
        }
    }

    #[test]
    fn random_regimes_small_sample() {
        let g = CastGrid::<f64>::default_demo();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..10 {
            let l = random_positive_layer::<f64, _>(&mut rng, 3, i % 2 == 0).unwrap();
            let r = demo_theorem(DemoKind::PositiveEigs, &l, &g, 20_000, CastMode::PerStep).unwrap();
            assert!(r.passed(), "{r:?}");
            let l = random_negative_layer::<f64, _>(&mut rng, 3);
            let r = demo_theorem(DemoKind::NegativeReal, &l, &g, 20_000, CastMode::PerStep).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
