//! Linear recurrent layers `H_i = A(x_i)·H_{i−1} + B(x_i)` with discrete
//! decoders, stacked models, exact and finite-precision evaluation, and a
//! parallel-prefix evaluation path.

mod decoder;
mod run;
mod scan;

pub use decoder::{Decoder, Prototype, ROUND_TOLERANCE};
pub use run::{layer_step, layer_trajectory, model_run, model_run_cast, model_trace, Runner, Trace};
pub use scan::{scan_eval, AffinePair};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{gh_product_eigenvalues, spectral_norm, eigenvalues_small, GhProduct, LinalgError, Matrix, EIGEN_MAX_DIM};
use crate::precision::PrecisionError;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LrnnError {
    #[error("layer {layer}: token {token} outside alphabet of size {alphabet}")]
    UnknownToken { layer: usize, token: usize, alphabet: usize },
    #[error("token {token}: {reason}")]
    InvalidTransition { token: usize, reason: String },
    #[error("invalid decoder: {0}")]
    InvalidDecoder(String),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("decode failed at position {position}, layer {layer}: {message}")]
    DecodeAt { position: usize, layer: usize, message: String },
    #[error("shape: {0}")]
    Shape(String),
    #[error("model has no layers")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Precision(#[from] PrecisionError),
}

/// Admissible eigenvalue range of the state-transition matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenRange {
    /// `[−1, 1]`
    #[default]
    Symmetric,
    /// `[0, 1]`
    UnitInterval,
}

impl EigenRange {
    pub fn contains(self, x: f64, tol: f64) -> bool {
        let lo = match self {
            EigenRange::Symmetric => -1.0,
            EigenRange::UnitInterval => 0.0,
        };
        x >= lo - tol && x <= 1.0 + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub range: EigenRange,
    /// Skip every norm and eigenvalue check (full-matrix baselines).
    pub allow_unbounded: bool,
}

impl ValidationOptions {
    pub fn unit_interval() -> Self {
        Self {
            range: EigenRange::UnitInterval,
            allow_unbounded: false,
        }
    }
}

/// A token's state-transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Transition<T> {
    /// `a·I`
    Scalar { a: T },
    Diagonal { diag: Vec<T> },
    /// Product of GH factors, applied without forming the matrix.
    Gh { product: GhProduct<T> },
    Full { matrix: Matrix<T> },
    Zero,
}

const NORM_TOL: f64 = 1e-8;

impl<T: Scalar> Transition<T> {
    pub fn identity() -> Self {
        Transition::Scalar { a: T::one() }
    }

    /// Dense `n × n` realization.
    pub fn to_matrix(&self, n: usize) -> Matrix<T> {
        match self {
            Transition::Scalar { a } => Matrix::identity(n).scale(*a),
            Transition::Diagonal { diag } => Matrix::diag(diag),
            Transition::Gh { product } => product.to_matrix(),
            Transition::Full { matrix } => matrix.clone(),
            Transition::Zero => Matrix::zeros(n, n),
        }
    }

    /// Checks the shape against state dimension `n` and the eigenvalue /
    /// norm constraints of `opts`.
    pub fn validate(&self, n: usize, opts: ValidationOptions) -> Result<(), String> {
        let range = opts.range;
        let check = |x: T, what: &str| -> Result<(), String> {
            if !x.is_finite() {
                return Err(format!("non-finite {what}"));
            }
            if !opts.allow_unbounded && !range.contains(x.f64(), 0.0) {
                return Err(format!("{what} {} outside the {range:?} range", x));
            }
            Ok(())
        };
        match self {
            Transition::Scalar { a } => check(*a, "scalar"),
            Transition::Diagonal { diag } => {
                if diag.len() != n {
                    return Err(format!("diagonal of length {} for state dimension {n}", diag.len()));
                }
                diag.iter().try_for_each(|&x| check(x, "diagonal entry"))
            }
            Transition::Gh { product } => {
                if product.dim() != n {
                    return Err(format!("GH product of dimension {} for state dimension {n}", product.dim()));
                }
                product.validate().map_err(|e| e.to_string())?;
                product
                    .factors()
                    .iter()
                    .try_for_each(|f| check(f.eigenvalue(), "GH eigenvalue"))
            }
            Transition::Full { matrix } => {
                if matrix.shape() != (n, n) {
                    return Err(format!("matrix {:?} for state dimension {n}", matrix.shape()));
                }
                if !matrix.is_finite() {
                    return Err("non-finite matrix".into());
                }
                if opts.allow_unbounded {
                    return Ok(());
                }
                let norm = spectral_norm(matrix).f64();
                if norm > 1.0 + NORM_TOL {
                    return Err(format!("spectral norm {norm} exceeds 1"));
                }
                if range == EigenRange::UnitInterval {
                    if n > EIGEN_MAX_DIM {
                        return Err("cannot certify a [0, 1] spectrum above dimension 4".into());
                    }
                    let eig = eigenvalues_small(matrix).map_err(|e| e.to_string())?;
                    if eig.iter().any(|z| z.im.abs() > NORM_TOL || !range.contains(z.re, NORM_TOL)) {
                        return Err("eigenvalues outside [0, 1]".into());
                    }
                }
                Ok(())
            }
            Transition::Zero => Ok(()),
        }
    }

    /// Eigenvalues of the realized matrix, for `n ≤ 4` or GH products whose
    /// active span has dimension at most 4.
    pub fn eigenvalues(&self, n: usize) -> Result<Vec<num_complex::Complex<f64>>, LinalgError> {
        match self {
            Transition::Scalar { a } => Ok(vec![num_complex::Complex::new(a.f64(), 0.0); n]),
            Transition::Diagonal { diag } => Ok(diag.iter().map(|x| num_complex::Complex::new(x.f64(), 0.0)).collect()),
            Transition::Gh { product } => gh_product_eigenvalues(product),
            Transition::Full { matrix } => eigenvalues_small(matrix),
            Transition::Zero => Ok(vec![num_complex::Complex::new(0.0, 0.0); n]),
        }
    }
}

/// One recurrent layer. Token `w` selects `transitions[w]` and `inputs[w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LrnnLayer<T> {
    pub transitions: Vec<Transition<T>>,
    /// `n × d` input contribution per token.
    pub inputs: Vec<Matrix<T>>,
    /// `n × d` initial state.
    pub h0: Matrix<T>,
    pub decoder: Decoder<T>,
    /// Rescale the state to unit Frobenius norm every this many steps;
    /// 0 disables.
    #[serde(default)]
    pub renormalize_every: u64,
}

impl<T: Scalar> LrnnLayer<T> {
    /// Layer with `B ≡ 0`.
    pub fn homogeneous(transitions: Vec<Transition<T>>, h0: Matrix<T>, decoder: Decoder<T>) -> Self {
        let (n, d) = h0.shape();
        let inputs = vec![Matrix::zeros(n, d); transitions.len()];
        Self {
            transitions,
            inputs,
            h0,
            decoder,
            renormalize_every: 0,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.transitions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.h0.rows()
    }

    pub fn value_dim(&self) -> usize {
        self.h0.cols()
    }

    pub fn num_outputs(&self) -> usize {
        self.decoder.num_outputs(self.alphabet_size(), self.state_dim())
    }

    pub fn validate(&self, opts: ValidationOptions) -> Result<(), LrnnError> {
        let (n, d) = self.h0.shape();
        if n == 0 || d == 0 || self.transitions.is_empty() {
            return Err(LrnnError::Shape("empty state or alphabet".into()));
        }
        if !self.h0.is_finite() {
            return Err(LrnnError::Shape("non-finite initial state".into()));
        }
        if self.inputs.len() != self.transitions.len() {
            return Err(LrnnError::Shape(format!(
                "{} inputs for {} transitions",
                self.inputs.len(),
                self.transitions.len()
            )));
        }
        for (token, (a, b)) in self.transitions.iter().zip(&self.inputs).enumerate() {
            a.validate(n, opts)
                .map_err(|reason| LrnnError::InvalidTransition { token, reason })?;
            if b.shape() != (n, d) || !b.is_finite() {
                return Err(LrnnError::InvalidTransition {
                    token,
                    reason: format!("input of shape {:?}, expected {:?}", b.shape(), (n, d)),
                });
            }
        }
        self.decoder.validate(n, d)
    }
}

/// Stacked layers; layer `i + 1` reads the decoded outputs of layer `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LrnnModel<T> {
    pub layers: Vec<LrnnLayer<T>>,
}

impl<T: Scalar> LrnnModel<T> {
    pub fn new(layers: Vec<LrnnLayer<T>>, opts: ValidationOptions) -> Result<Self, LrnnError> {
        let m = Self { layers };
        m.validate(opts)?;
        Ok(m)
    }

    pub fn validate(&self, opts: ValidationOptions) -> Result<(), LrnnError> {
        if self.layers.is_empty() {
            return Err(LrnnError::Empty);
        }
        for l in &self.layers {
            l.validate(opts)?;
        }
        for w in self.layers.windows(2) {
            if w[1].alphabet_size() < w[0].num_outputs() {
                return Err(LrnnError::Shape(format!(
                    "layer emits {} labels but the next reads only {}",
                    w[0].num_outputs(),
                    w[1].alphabet_size()
                )));
            }
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        self.layers[0].alphabet_size()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers.last().map_or(0, LrnnLayer::num_outputs)
    }

    /// Every transition of every layer.
    pub fn transitions(&self) -> impl Iterator<Item = &Transition<T>> {
        self.layers.iter().flat_map(|l| l.transitions.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation_as_householders;

    #[test]
    fn range_checks() {
        let sym = ValidationOptions::default();
        let unit = ValidationOptions::unit_interval();
        let neg = Transition::Scalar { a: -1.0f64 };
        assert!(neg.validate(1, sym).is_ok());
        assert!(neg.validate(1, unit).is_err());
        assert!(Transition::Scalar { a: 1.5f64 }.validate(1, sym).is_err());
        let (f1, f2) = rotation_as_householders(1.0f64);
        let rot = Transition::Gh {
            product: GhProduct::new(2, vec![f1, f2]).unwrap(),
        };
        assert!(rot.validate(2, sym).is_ok());
        assert!(rot.validate(2, unit).is_err());
        let big = Transition::Full {
            matrix: Matrix::diag(&[2.0f64, 0.0]),
        };
        assert!(big.validate(2, sym).is_err());
        assert!(big
            .validate(
                2,
                ValidationOptions {
                    allow_unbounded: true,
                    ..sym
                }
            )
            .is_ok());
        let full_rot = Transition::Full {
            matrix: crate::linalg::rotation2(0.3f64),
        };
        assert!(full_rot.validate(2, sym).is_ok());
        assert!(full_rot.validate(2, unit).is_err());
        assert!(Transition::<f64>::Zero.validate(3, unit).is_ok());
    }

    #[test]
    fn json_shape() {
        let t = Transition::Scalar { a: -1.0f64 };
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"kind":"scalar","a":-1.0}"#);
        let z: Transition<f64> = serde_json::from_str(r#"{"kind":"zero"}"#).unwrap();
        assert_eq!(z, Transition::Zero);
    }
}
