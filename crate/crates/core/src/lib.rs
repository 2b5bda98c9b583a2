//! Numerics for linear parabolic equations driven by geometric rough paths.
//!
//! The crate is organised bottom-up:
//!
//! * [`roughpath`]: time grids, two-index maps, p-variation, canonical lifts,
//!   Chen and geometricity diagnostics, brackets, Brownian sampling.
//! * [`sewing`]: rough integrals by dyadic refinement, the Λ map and the
//!   rough Gronwall bound.
//! * [`fields`]: periodic grid functions, discrete Sobolev norms, mixed
//!   space-time norms and the test dictionary used for dual pairings.
//! * [`driver`]: unbounded rough drivers built from noise coefficients and a
//!   rough path, plus smoothing, cutoff and translation operators.
//! * [`parabolic`]: the θ-scheme solver for the classical equation along a
//!   piecewise-linear path, drift functionals and energy bookkeeping.
//! * [`rough_solver`]: Wong–Zakai runs, remainder diagnostics, stability
//!   sweeps and the stochastic parabolicity experiment.
//!
//! Everything is a pure function of its inputs. Values are immutable after
//! construction, so independent runs may execute on separate threads.

pub mod driver;
pub mod error;
pub mod fields;
pub mod parabolic;
pub mod rough_solver;
pub mod roughpath;
pub mod sewing;
pub(crate) mod stats;

pub use error::{Error, Result};
