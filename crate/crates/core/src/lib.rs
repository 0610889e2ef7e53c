//! Large-sample coverage probability of a confidence interval reported after
//! a preliminary Wald test of a q-dimensional restriction (q >= 2) in a
//! regression model.
//!
//! The coverage is a function of `(q, alpha, alpha_tilde, |b|, |lambda|, psi)`
//! only, and reduces to a closed-form term plus a double integral (q = 2) or
//! a triple integral (q > 2). [`lscp::lscp`] evaluates it by nested
//! Gauss-Legendre quadrature and [`oracle`] provides an independent Monte
//! Carlo check. [`model`] fits the full and restricted logistic models that
//! supply `|b|`, and [`analysis`] builds the contour grids, minimum-coverage
//! search, parametric bootstrap, and finite-sample simulation on top.

pub mod analysis;
pub mod distributions;
mod error;
pub mod exec;
pub mod lscp;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod report;

pub use error::{Error, ErrorKind, Result};
pub use exec::Exec;
