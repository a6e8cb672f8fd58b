//! Monotone explicit finite differences for `u_t - F(D^2 u) = g`.

pub mod grid;
pub mod grid_function;
pub mod operator;
pub mod scheme;

pub use grid::{Grid, GridOptions};
pub use grid_function::{GridFunction, Role};
pub use operator::{CoefficientField, OperatorKind, OperatorSpec};
pub use scheme::{
    comparison_test, default_stride, fundamental_solution, solve, solve_observed, solve_with_stride, Boundary, ComparisonOutcome,
    FnBoundary, FnSource, ScaledSource, Scheme, Source, ZeroBoundary, ZeroSource,
};
