//! Asymptotic-preserving finite-element solver for the anisotropic
//! nonlinear heat equation
//!
//! ```text
//! ∂_t u − (1/ε) ∇_∥·(A_∥ u^{5/2} ∇_∥u) − ∇_⊥·(A_⊥ ∇_⊥u) = 0
//! ```
//!
//! on the unit square, discretized with biquadratic (Q2) elements.

pub mod assembly;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod mms;
pub mod quadrature;
pub mod schemes;
pub mod shape;
pub mod sparse;

pub use error::{Error, Result};
