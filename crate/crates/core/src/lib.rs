//! Scalar auxiliary equations that bound the solution norms of time-varying
//! nonlinear ODE systems `x' = B(t)x + f(t, x) + F(t)`.
//!
//! The pipeline splits `B` into slow and fast parts by moving averages
//! ([`dichotomy`]), diagonalizes the slow part along time with a Lyapunov
//! transform ([`transform_chain`]), integrates the resulting scalar bounding
//! equation ([`aux_ode`]) and turns it into stability and boundedness regions
//! ([`criteria`]). Benchmark systems live in [`systems`].

pub mod aux_ode;
pub mod criteria;
pub mod dichotomy;
pub mod error;
pub mod linalg;
pub mod ode;
pub mod path;
pub mod pipeline;
pub mod systems;
pub mod transform_chain;

pub use error::{Error, Result};
