//! Scattering with geometric (Berry-type) gauge potentials.
//!
//! Units throughout: hbar = 1 and, unless a config says otherwise, m = 1/2 so
//! that hbar^2/2m = 1.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod error;
pub mod ferroslab;
pub mod gauge_core;
pub mod internal_gauge;
pub mod linalg;
pub mod model1d;
pub mod ode;
pub mod slab2d;
pub mod special;
pub mod tdse;

pub use error::{GeomagError, Result};
pub use num_complex::Complex64 as C64;
