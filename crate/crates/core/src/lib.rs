//! Numerical toolkit for mountain-pass critical points of semilinear
//! elliptic functionals with critical growth, built on the dilation group
//! `u -> gamma^{(N-2)j/2} u(gamma^j x)`.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`.

// `!(x > 0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod function_space;
pub mod functional;
pub mod mountain_pass;
pub mod nonlinearity;
pub mod profile_decomposition;
pub mod scalar;
pub mod sphere_maximizer;

pub use scalar::Real;

pub type Spec = nonlinearity::NonlinearitySpec<f64>;
pub type NonlinearityKind = nonlinearity::Kind<f64>;
pub type Grid = function_space::Grid<f64>;
pub type Function = function_space::DiscreteFunction<f64>;
