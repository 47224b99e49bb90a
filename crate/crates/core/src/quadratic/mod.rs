//! Scalar quadratic model of delayed momentum methods.
//!
//! On `f(w) = lambda w^2 / 2` every method reduces to a linear recurrence in
//! `w`; its dominant characteristic root sets the asymptotic decay rate.

mod halflife;
mod recurrence;
mod roots;

pub use halflife::{
    half_life, linear_grid, log_grid, momentum_grid, momentum_horizon_sweep, optimal_halflife, optimal_momentum_nodelay,
    stability_heatmap, HalfLifeResult, Heatmap, SearchSpec, SweepCell,
};
pub use recurrence::{DecayEstimate, QuadMethod, QuadMethodSpec, QuadraticRecurrence};
pub use roots::{dominant_magnitude, max_root_magnitude, poly_roots, RootAnalysis};
