//! Robust linear regression by maximum correntropy.
//!
//! The crate covers the whole pipeline around the estimator
//!
//! ```text
//! theta* = argmax_theta (1/N) sum_t exp(-gamma * |y_t - x_t^T theta|^p)
//! ```
//!
//! - [`kernels`]: the `|.|^p` loss family, the correntropy kernel and the sample objective.
//! - [`estimators`]: OLS, LAD, their weighted variants and the majorize-minimize MCE solver.
//! - [`richness`]: the informativity measure `rho_alpha(X)` with certified lower/upper brackets.
//! - [`bounds`]: stability condition and parametric error bounds for MCE fits.
//! - [`datagen`]: seeded synthetic FIR data with dense and sparse noise.
//! - [`harness`]: Monte-Carlo experiments and the command-line front end.
//! - [`io`]: CSV/JSON dataset, matrix, sidecar and config formats.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod numkit;
pub mod richness;
pub mod rng;

pub use error::{Error, Result};
