//! Radial normalized solutions of `(-Δ)^m u + μ|x|^{-2m} u + λu = ηu³ + g(u)`
//! in `R^{2m}` with prescribed mass, computed by minimizing the energy over
//! the mass sphere intersected with the Pohožaev–Nehari manifold.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod banded;
pub mod calculus;
pub mod config;
pub mod energy;
pub mod error;
pub mod exec;
pub mod grid;
pub mod interp;
pub mod lab;
pub mod nonlin;
pub mod profiles;
pub mod report;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Grading, RadialFunction, RadialGrid};
pub use nonlin::{ModelNonlinearity, Nonlinearity, Params};
