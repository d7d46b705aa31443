//! Association measures for a response `Y`, an exposure `X` and a covariate `W`,
//! evaluated conditionally on `W` and marginally over it, together with
//! numerical decisions of simple and average collapsibility.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: IO, configuration files and the command line live in the
//! companion `collapse-cli` crate.
//!
//! Layout:
//!
//! * [`numerics`]: adaptive Gauss-Kronrod quadrature, Gauss-Hermite
//!   expectations, Richardson-extrapolated finite differences.
//! * [`distributions`]: densities, distribution functions and seeded samplers.
//! * [`expr`]: the small expression language used for parameter expressions.
//! * [`model`]: conditional models `f(w|x)`, `f(y|x,w)` and their mixtures.
//! * [`measures`]: EDF, MDI, LED, DDF and the binary-response MDI.
//! * [`collapsibility`]: verdicts, the EDF residual, condition probes and
//!   reversal detection.
//! * [`multivariate`]: the two-component covariate `W = (W1, W2)`.
//! * [`regression`]: simulation and in-house OLS / IRLS fitting.
//! * [`scenarios`]: the catalog of reference models with closed-form truths.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod collapsibility;
pub mod distributions;
pub mod error;
pub mod expr;
pub mod measures;
pub mod model;
pub mod multivariate;
pub mod numerics;
pub mod regression;
pub mod scenarios;

mod prelude;

pub use error::{Error, Result};
