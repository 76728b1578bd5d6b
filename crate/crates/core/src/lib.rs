//! Arbitrary-order deferred correction (DeC) time integration with relaxation.
//!
//! The crate provides the DeC coefficients for any order, the equivalent Runge–Kutta
//! tableaux, relaxation coefficients for energy and general entropies, a set of ODE
//! test problems, an entropy conservative finite volume discretization of Burgers'
//! equation and a one-dimensional residual distribution scheme whose DeC update avoids
//! mass matrix inversion.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod dec;
pub mod error;
pub mod fv;
pub mod harness;
pub mod problems;
pub mod quadrature;
pub mod rd1d;
pub mod relax;
pub mod tableau;

pub use error::{Error, Result};
