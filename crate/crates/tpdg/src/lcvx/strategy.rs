//! Strategies: which constraints matter, and for how long to fly.
//!
//! A [`Strategy`] is the pair (tight-constraint flag vector, flight time).
//! Extraction reads the flags off a solved full problem by measuring scaled
//! residuals; reduction filters a full problem down to the flagged blocks;
//! the feasibility check evaluates a candidate trajectory against every
//! constraint of the full problem without another solve.
//!
//! All residuals here are evaluated in the constraint families' *original*
//! algebraic forms (e.g. the lower thrust bound as its quadratic, not its
//! cone lift — the two have identical zero sets, so tightness agrees), and
//! are normalized by `max(1, |bounding side|)` so tolerances are relative
//! for large values and absolute near zero.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcvx::layout::{ConstraintFamily, ConstraintLayout};
use crate::lcvx::socp::{ConstraintBlock, DiscretizedSocp};

// ---------------------------------------------------------------------------
// Strategy
// ---------------------------------------------------------------------------

/// A constraint-enforcement plan: one flag per (family, node) pair in the
/// canonical layout, plus the flight time to solve at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    /// Flag vector of length `8N - 3`; `true` keeps the constraint.
    pub tau: Vec<bool>,
    /// Flight time the flags were extracted or predicted at, seconds.
    pub t_f_star: f64,
}

impl Strategy {
    pub fn new(tau: Vec<bool>, t_f_star: f64) -> Result<Self> {
        if !(t_f_star > 0.0 && t_f_star.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "t_f_star",
                reason: format!("flight time must be positive and finite, got {t_f_star}"),
            });
        }
        if tau.len() < 13 || (tau.len() + 3) % 8 != 0 {
            return Err(Error::InvalidParameter {
                field: "tau",
                reason: format!("flag vector length must be 8N-3 for N >= 2, got {}", tau.len()),
            });
        }
        Ok(Self { tau, t_f_star })
    }

    /// Node count implied by the flag vector length.
    pub fn n_nodes(&self) -> usize {
        (self.tau.len() + 3) / 8
    }

    /// Number of set flags.
    pub fn retained(&self) -> usize {
        self.tau.iter().filter(|f| **f).count()
    }

    /// Keep-everything strategy (reduction becomes the identity).
    pub fn all_ones(n_nodes: usize, t_f_star: f64) -> Result<Self> {
        Self::new(vec![true; 8 * n_nodes - 3], t_f_star)
    }

    /// Keep-nothing strategy (only dynamics and boundary remain).
    pub fn all_zeros(n_nodes: usize, t_f_star: f64) -> Result<Self> {
        Self::new(vec![false; 8 * n_nodes - 3], t_f_star)
    }
}

// ---------------------------------------------------------------------------
// Residual evaluation
// ---------------------------------------------------------------------------

/// Scaled slack of one block at a point: `slack >= 0` means satisfied, and
/// `slack / scale` is the dimensionless margin (minimum over the block's
/// rows for multi-row blocks).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockResidual {
    pub slack: f64,
    pub scale: f64,
}

impl BlockResidual {
    pub fn scaled(&self) -> f64 {
        self.slack / self.scale
    }
}

/// Evaluate one block's residual in its family's original algebraic form.
pub fn block_residual(socp: &DiscretizedSocp, block: &ConstraintBlock, x: &[f64]) -> BlockResidual {
    let vars = socp.vars;
    let k = block.node;
    let at3 = |idx: [usize; 3]| Vector3::new(x[idx[0]], x[idx[1]], x[idx[2]]);
    match block.family {
        ConstraintFamily::ThrustLower => {
            let xi = x[vars.xi(k)];
            let dz = x[vars.z(k)] - socp.envelope.z_lower[k];
            let lhs = socp.envelope.mu_min[k] * (1.0 - dz + 0.5 * dz * dz);
            BlockResidual { slack: xi - lhs, scale: xi.abs().max(1.0) }
        }
        ConstraintFamily::ThrustUpper => {
            let xi = x[vars.xi(k)];
            let dz = x[vars.z(k)] - socp.envelope.z_lower[k];
            let rhs = socp.envelope.mu_max[k] * (1.0 - dz);
            BlockResidual { slack: rhs - xi, scale: rhs.abs().max(1.0) }
        }
        ConstraintFamily::ThrustNorm => {
            let xi = x[vars.xi(k)];
            let u = at3(vars.u(k));
            BlockResidual { slack: xi - u.norm(), scale: xi.abs().max(1.0) }
        }
        ConstraintFamily::Pointing => {
            let u_z = x[vars.u(k)[2]];
            let lhs = socp.params.gamma_p.cos() * x[vars.xi(k)];
            BlockResidual { slack: u_z - lhs, scale: u_z.abs().max(1.0) }
        }
        ConstraintFamily::Glideslope => {
            let r = at3(vars.r(k));
            let slack = socp
                .halfspaces
                .normals
                .iter()
                .zip(&socp.halfspaces.offsets)
                .map(|(n, h)| h - n.dot(&r))
                .fold(f64::INFINITY, f64::min);
            BlockResidual { slack, scale: 1.0 }
        }
        ConstraintFamily::MaxVelocity => {
            let v_max = socp.mission.vehicle.v_max;
            BlockResidual { slack: v_max - at3(vars.v(k)).norm(), scale: v_max.max(1.0) }
        }
        ConstraintFamily::MassLower => {
            let z_lo = socp.envelope.z_lower[k];
            BlockResidual { slack: x[vars.z(k)] - z_lo, scale: z_lo.abs().max(1.0) }
        }
        ConstraintFamily::MassUpper => {
            let z_hi = socp.envelope.z_upper[k];
            BlockResidual { slack: z_hi - x[vars.z(k)], scale: z_hi.abs().max(1.0) }
        }
        ConstraintFamily::DryMass => {
            let floor = socp.mission.vehicle.m_dry.ln();
            BlockResidual { slack: x[vars.z(k)] - floor, scale: floor.abs().max(1.0) }
        }
    }
}

fn check_point_len(socp: &DiscretizedSocp, x: &[f64]) -> Result<()> {
    if x.len() != socp.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} scalars, problem has {}",
            x.len(),
            socp.n_vars()
        )));
    }
    Ok(())
}

/// Flags of the blocks whose scaled residual at `x` is within `tol` of
/// equality. Only meaningful on a full (unreduced) problem.
pub fn tight_flags_at(socp: &DiscretizedSocp, x: &[f64], tol: f64) -> Result<Vec<bool>> {
    check_point_len(socp, x)?;
    if socp.retained_flags.is_some() {
        return Err(Error::InvalidParameter {
            field: "socp",
            reason: "tight-set extraction needs the full problem, not a reduced one".into(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            field: "tol",
            reason: format!("tolerance must be > 0, got {tol}"),
        });
    }
    let mut tau = vec![false; socp.layout.flag_count()];
    for block in &socp.blocks {
        if let Some(flag) = block.flag {
            tau[flag] = block_residual(socp, block, x).scaled() <= tol;
        }
    }
    Ok(tau)
}

// ---------------------------------------------------------------------------
// Reduction
// ---------------------------------------------------------------------------

/// Filter a full problem down to its flagged constraint blocks. Dynamics and
/// boundary equalities always survive; a block survives iff its flag is set;
/// surviving rows keep their original conic type (inequalities never become
/// equalities). The problem must already be built at `strategy.t_f_star`.
pub fn reduce_problem(socp: &DiscretizedSocp, strategy: &Strategy) -> Result<DiscretizedSocp> {
    if socp.retained_flags.is_some() {
        return Err(Error::InvalidParameter {
            field: "socp",
            reason: "cannot reduce an already-reduced problem".into(),
        });
    }
    if strategy.tau.len() != socp.layout.flag_count() {
        return Err(Error::DimensionMismatch(format!(
            "strategy has {} flags, layout has {}",
            strategy.tau.len(),
            socp.layout.flag_count()
        )));
    }
    let rel = (strategy.t_f_star - socp.t_f).abs() / socp.t_f.max(1.0);
    if rel > 1e-9 {
        return Err(Error::InvalidParameter {
            field: "t_f_star",
            reason: format!(
                "problem was built at t_f = {}, strategy wants {}; rebuild at the strategy's time",
                socp.t_f, strategy.t_f_star
            ),
        });
    }
    let blocks: Vec<ConstraintBlock> = socp
        .blocks
        .iter()
        .filter(|b| b.flag.is_some_and(|i| strategy.tau[i]))
        .cloned()
        .collect();
    Ok(DiscretizedSocp {
        blocks,
        retained_flags: Some(strategy.retained()),
        ..socp.clone()
    })
}

// ---------------------------------------------------------------------------
// Feasibility check
// ---------------------------------------------------------------------------

/// Worst scaled violation for one constraint family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyViolation {
    pub family: String,
    pub violation: f64,
}

/// Result of evaluating a candidate point against every constraint of a
/// problem. `feasible` requires every inequality within `tol` and every
/// equality within `tol_eq`; `worst_violation` is the largest scaled
/// violation across both kinds (so with distinct tolerances a point can in
/// principle be infeasible with `worst_violation <= tol` — the per-kind
/// fields disambiguate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub worst_violation: f64,
    pub worst_equality_violation: f64,
    pub worst_inequality_violation: f64,
    /// Per-family worst inequality violations, in canonical family order.
    pub family_violations: Vec<FamilyViolation>,
}

impl FeasibilityReport {
    /// Families sorted most-violated first, excluding clean ones.
    pub fn offending_families(&self) -> Vec<&FamilyViolation> {
        let mut out: Vec<&FamilyViolation> =
            self.family_violations.iter().filter(|f| f.violation > 0.0).collect();
        out.sort_by(|a, b| b.violation.total_cmp(&a.violation));
        out
    }
}

/// Evaluate every equality and inequality of `socp` at the point `x`.
pub fn feasibility_at(
    socp: &DiscretizedSocp,
    x: &[f64],
    tol: f64,
    tol_eq: f64,
) -> Result<FeasibilityReport> {
    check_point_len(socp, x)?;
    if !(tol > 0.0 && tol_eq > 0.0) {
        return Err(Error::InvalidParameter {
            field: "tol",
            reason: "feasibility tolerances must be > 0".into(),
        });
    }
    let mut worst_eq = 0.0_f64;
    for eq in &socp.equalities {
        let violation = (eq.row.dot(x) - eq.rhs).abs() / eq.rhs.abs().max(1.0);
        worst_eq = worst_eq.max(violation);
    }
    let mut family_worst = [0.0_f64; 9];
    for block in &socp.blocks {
        let residual = block_residual(socp, block, x);
        let violation = (-residual.scaled()).max(0.0);
        let idx = block.family.index();
        family_worst[idx] = family_worst[idx].max(violation);
    }
    let worst_ineq = family_worst.iter().copied().fold(0.0_f64, f64::max);
    Ok(FeasibilityReport {
        feasible: worst_eq <= tol_eq && worst_ineq <= tol,
        worst_violation: worst_eq.max(worst_ineq),
        worst_equality_violation: worst_eq,
        worst_inequality_violation: worst_ineq,
        family_violations: ConstraintFamily::ALL
            .iter()
            .map(|f| FamilyViolation {
                family: f.name().to_string(),
                violation: family_worst[f.index()],
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Post-solve activation profiling
// ---------------------------------------------------------------------------

/// Maximal runs of consecutive set flags within one family, as
/// `(first node, run length)` pairs. Used to audit the trajectory-dependent
/// optimality assumptions: the glideslope is expected to activate only
/// instantaneously (runs of length 1) and the velocity envelope only a
/// discrete number of times (finitely many runs).
pub fn activation_runs(
    layout: &ConstraintLayout,
    tau: &[bool],
    family: ConstraintFamily,
) -> Vec<(usize, usize)> {
    let nodes = layout.nodes_of(family);
    let range = layout.family_range(family);
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (node, flag) in nodes.zip(range) {
        if tau[flag] {
            current = match current {
                Some((start, len)) => Some((start, len + 1)),
                None => Some((node, 1)),
            };
        } else if let Some(run) = current.take() {
            runs.push(run);
        }
    }
    if let Some(run) = current {
        runs.push(run);
    }
    runs
}
