//! Numerical laboratory for quantitative Krylov-type growth estimates.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: parabolic and oblique cylinders, rasterized sets, coverings
//!   and the chain/march planners used to propagate positivity.
//! * [`pucci`]: Pucci extremal operators and ellipticity checks.
//! * [`solver`]: a monotone explicit finite-difference scheme for
//!   `u_t - M(D^2 u) = g` on rasterized cylinders.
//! * [`barriers`]: the closed-form barrier, its sampled certification, and
//!   the constants it produces.
//! * [`constants`]: composition of the barrier constants into explicit lower
//!   bounds.
//! * [`harness`]: ensembles, inequality checks and reports.

// `!(x > 0.0)` style guards are there to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod constants;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod logval;
pub mod pucci;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Coord, IndicatorSet, Lattice, ObliqueCylinder, ParabolicCylinder};
pub use logval::LogValue;
pub use pucci::{EllipticityPair, SymMatrix};
pub use solver::{GridFunction, OperatorKind, OperatorSpec, Role};
