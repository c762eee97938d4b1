//! Asymptotic-preserving IMEX-RK micro-macro schemes for linear kinetic
//! equations in the diffusive scaling, in one space dimension.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod analysis;
pub mod collision;
pub mod error;
pub mod experiments;
pub mod inflow;
pub mod periodic;
pub mod reference;
pub mod stencil;
pub mod tableau;
pub mod velocity;

pub use error::{Error, Result};
