//! Fuel-optimal powered-descent guidance with learned constraint screening.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`problem`] — mission/vehicle configuration and the 9-scalar parameter
//!    vector that defines one descent problem instance.
//! 2. [`lcvx`] — the convexified trajectory optimization problem: exact
//!    discretization, second-order-cone assembly, tight-constraint
//!    extraction, and constraint-reduced problem construction.
//! 3. [`solver`] — conic solves, the final-time line search, and the
//!    reduced-problem solve.
//! 4. [`sampler`] — randomized dataset generation over the parameter space.
//! 5. [`nn`] — from-scratch transformer regressors that map parameters to a
//!    predicted tight-constraint set and optimal final time.
//! 6. [`runtime`] — the online loop: predict, solve reduced, verify
//!    feasibility, fall back to the full solve when needed.

pub mod error;
pub mod lcvx;
pub mod nn;
pub mod problem;
pub mod runtime;
pub mod sampler;
pub mod solver;

pub use error::{Error, Result};

/// The narrative guide, embedded from `book/src` so that every code block
/// in it compiles and runs as a doc-test alongside the unit tests. Read it
/// rendered (`mdbook build book`) or here in the API docs.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/descent-problem.md")]
    pub mod descent_problem {}
    #[doc = include_str!("../../../book/src/solving.md")]
    pub mod solving {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    pub mod strategies {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    pub mod dataset {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/online.md")]
    pub mod online {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
