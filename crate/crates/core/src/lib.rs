//! Linear recurrent networks with diagonal and generalized Householder
//! state transitions, exact compilation of automata and group word problems
//! into network weights, finite-precision dynamics, and synthetic
//! state-tracking tasks.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type.

pub mod compile;
pub mod fsa;
pub mod linalg;
pub mod lrnn;
pub mod phenom;
pub mod precision;
pub mod scalar;
pub mod tasks;
pub mod verify;

pub use scalar::Scalar;

pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type GhFactorF64 = linalg::GhFactor<f64>;
pub type GhFactorF32 = linalg::GhFactor<f32>;
pub type GhProductF64 = linalg::GhProduct<f64>;
pub type GhProductF32 = linalg::GhProduct<f32>;
pub type CastGridF64 = precision::CastGrid<f64>;
pub type CastGridF32 = precision::CastGrid<f32>;
pub type TransitionF64 = lrnn::Transition<f64>;
pub type TransitionF32 = lrnn::Transition<f32>;
pub type LrnnLayerF64 = lrnn::LrnnLayer<f64>;
pub type LrnnLayerF32 = lrnn::LrnnLayer<f32>;
pub type LrnnModelF64 = lrnn::LrnnModel<f64>;
pub type LrnnModelF32 = lrnn::LrnnModel<f32>;
