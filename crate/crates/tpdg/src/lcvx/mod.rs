//! The convexified powered-descent trajectory problem.
//!
//! Submodules cover the flag-space layout ([`layout`]), the polyhedral
//! glideslope cone ([`glideslope`]), problem assembly with exact
//! zero-order-hold discretization ([`socp`]), and strategies — extraction,
//! reduction, and feasibility checking ([`strategy`]).

pub mod glideslope;
pub mod layout;
pub mod socp;
pub mod strategy;

pub use glideslope::{glideslope_matrix, GlideslopeHalfspaces};
pub use layout::{ConstraintFamily, ConstraintLayout, LAYOUT_VERSION};
pub use socp::{
    build_socp, mass_envelope, max_burn_time, max_envelope_time, zoh_matrices, Affine, BlockBody,
    ConstraintBlock, DiscretizedSocp, LinearRow, MassEnvelope, SparseRow, Vars,
};
pub use strategy::{
    activation_runs, block_residual, feasibility_at, reduce_problem, tight_flags_at,
    BlockResidual, FamilyViolation, FeasibilityReport, Strategy,
};
