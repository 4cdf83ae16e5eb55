//! Multi-harmonic envelope approximation for semilinear hyperbolic systems
//! `u_t + A(d_x) u + E u / eps = eps T(u, u, u)` with highly oscillatory
//! initial data `p(x) exp(i kappa x / eps) + c.c.`, and an
//! oscillation-resolving pseudospectral reference solver to measure it
//! against.

// NaN must fail the positivity checks, and index loops read better in the
// numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod exec;
pub mod harness;
pub mod solvers;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
pub use exec::Exec;
pub use system::C64;
