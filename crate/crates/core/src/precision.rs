//! Finite datatypes and the nearest-value cast used to simulate
//! finite-precision recurrences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecisionError {
    #[error("cannot cast NaN")]
    NaN,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A finite set of representable values.
///
/// JSON: `{"kind":"uniform","min":-8,"max":8,"step":0.0009765625}` or
/// `{"kind":"explicit","values":[-1,0,1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum CastGrid<T> {
    Uniform { min: T, max: T, step: T },
    Explicit { values: Vec<T> },
}

impl<T: Scalar> CastGrid<T> {
    pub fn uniform(min: T, max: T, step: T) -> Result<Self, PrecisionError> {
        let g = CastGrid::Uniform { min, max, step };
        g.validate()?;
        Ok(g)
    }

    pub fn explicit(values: Vec<T>) -> Result<Self, PrecisionError> {
        let g = CastGrid::Explicit { values };
        g.validate()?;
        Ok(g)
    }

    /// `uniform(−8, 8, 2⁻¹⁰)`.
    pub fn default_demo() -> Self {
        CastGrid::Uniform {
            min: T::c(-8.0),
            max: T::c(8.0),
            step: T::c(1.0 / 1024.0),
        }
    }

    pub fn validate(&self) -> Result<(), PrecisionError> {
        let bad = |m: &str| Err(PrecisionError::InvalidGrid(m.to_string()));
        match self {
            CastGrid::Uniform { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    return bad("non-finite bound");
                }
                if !(*step > T::zero()) {
                    return bad("step must be positive");
                }
                if !(*min < *max) {
                    return bad("min must be below max");
                }
                if *min <= T::zero() && *max >= T::zero() {
                    let k = (-*min / *step).round();
                    if (*min + k * *step).abs() > *step * T::tol(1e-9) {
                        return bad("grid straddles zero without containing it");
                    }
                }
                Ok(())
            }
            CastGrid::Explicit { values } => {
                if values.is_empty() {
                    return bad("no values");
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite value");
                }
                if values.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("values must be strictly ascending");
                }
                let (lo, hi) = (values[0], values[values.len() - 1]);
                if lo <= T::zero() && hi >= T::zero() && !values.contains(&T::zero()) {
                    return bad("grid straddles zero without containing it");
                }
                Ok(())
            }
        }
    }

    pub fn min_value(&self) -> T {
        match self {
            CastGrid::Uniform { min, .. } => *min,
            CastGrid::Explicit { values } => values[0],
        }
    }

    pub fn max_value(&self) -> T {
        match self {
            CastGrid::Uniform { min, step, .. } => *min + T::c(self.uniform_top() as f64) * *step,
            CastGrid::Explicit { values } => values[values.len() - 1],
        }
    }

    fn uniform_top(&self) -> i64 {
        match self {
            CastGrid::Uniform { min, max, step } => {
                let k = ((*max - *min) / *step).f64();
                // tolerate max landing a hair below a grid point
                (k + 1e-9).floor() as i64
            }
            CastGrid::Explicit { .. } => unreachable!(),
        }
    }

    pub fn contains(&self, x: T) -> bool {
        matches!(self.cast(x), Ok(y) if y == x)
    }
}

/// Nearest grid value; ties go to the smaller value; out-of-range values clamp.
pub fn cast<T: Scalar>(x: T, g: &CastGrid<T>) -> Result<T, PrecisionError> {
    g.cast(x)
}

/// Explicit grids up to this size are searched linearly.
const SHORT_GRID: usize = 8;

/// Nearest of a short sorted grid by linear scan; strict `<` keeps the
/// smaller value on ties. `x` must not be NaN.
#[inline(always)]
pub(crate) fn nearest_linear<T: Scalar>(values: &[T], x: T) -> T {
    let mut best = values[0];
    let mut dist = (x - best).abs();
    for &v in &values[1..] {
        let d = (x - v).abs();
        if d < dist {
            best = v;
            dist = d;
        }
    }
    best
}

impl<T: Scalar> CastGrid<T> {
    /// The values of an explicit grid short enough for [`nearest_linear`].
    #[inline]
    pub(crate) fn short_values(&self) -> Option<&[T]> {
        match self {
            CastGrid::Explicit { values } if values.len() <= SHORT_GRID => Some(values),
            _ => None,
        }
    }

    #[inline]
    pub fn cast(&self, x: T) -> Result<T, PrecisionError> {
        let top = match self {
            CastGrid::Uniform { .. } => self.uniform_top(),
            CastGrid::Explicit { .. } => 0,
        };
        self.cast_with_top(x, top)
    }

    #[inline]
    fn cast_with_top(&self, x: T, top: i64) -> Result<T, PrecisionError> {
        if x.is_nan() {
            return Err(PrecisionError::NaN);
        }
        match self {
            CastGrid::Uniform { min, step, .. } => {
                let pos = (x - *min) / *step;
                if !(pos > T::zero()) {
                    return Ok(*min);
                }
                let pos = pos.f64();
                if pos >= top as f64 {
                    return Ok(*min + T::c(top as f64) * *step);
                }
                // 0 < pos < top, so truncation is floor
                let lower = pos as i64 as f64;
                let frac = pos - lower;
                let idx = if frac > 0.5 { lower + 1.0 } else { lower };
                Ok(*min + T::c(idx) * *step)
            }
            CastGrid::Explicit { values } if values.len() <= SHORT_GRID => Ok(nearest_linear(values, x)),
            CastGrid::Explicit { values } => {
                let i = values.partition_point(|&v| v < x);
                if i == 0 {
                    return Ok(values[0]);
                }
                if i == values.len() {
                    return Ok(values[values.len() - 1]);
                }
                let (lo, hi) = (values[i - 1], values[i]);
                if hi - x < x - lo {
                    Ok(hi)
                } else {
                    Ok(lo)
                }
            }
        }
    }

    pub fn cast_slice(&self, xs: &mut [T]) -> Result<(), PrecisionError> {
        let top = match self {
            CastGrid::Uniform { .. } => self.uniform_top(),
            CastGrid::Explicit { .. } => 0,
        };
        for x in xs.iter_mut() {
            *x = self.cast_with_top(*x, top)?;
        }
        Ok(())
    }
}

/// Element-wise cast of a state matrix.
pub fn cast_state<T: Scalar>(h: &Matrix<T>, g: &CastGrid<T>) -> Result<Matrix<T>, PrecisionError> {
    let mut out = h.clone();
    g.cast_slice(out.as_mut_slice())?;
    Ok(out)
}
