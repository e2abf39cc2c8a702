use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the numerical core is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant; exact for `f64`, rounded for `f32`.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// Widens to `f64`.
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance stated for `f64` arithmetic, relaxed to a small multiple of
    /// machine epsilon when the scalar type is coarser.
    fn tol(t: f64) -> Self {
        let floor = Self::epsilon().f64() * 64.0;
        Self::c(t.max(floor))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
