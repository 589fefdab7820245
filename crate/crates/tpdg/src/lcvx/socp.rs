//! Assembly of the discretized convex descent problem.
//!
//! Decision variables, per node `k` of `N` (base index `11k`):
//! position `r_k` (3), velocity `v_k` (3), mass-log `z_k` (1), thrust
//! acceleration `u_k` (3), thrust-slack `xi_k` (1) — `11N` scalars total.
//!
//! The continuous dynamics (rotating-frame translational motion plus
//! mass-log depletion) are linear and time-invariant, so a zero-order hold
//! on `(u, xi)` discretizes them *exactly* via the matrix exponential of the
//! augmented `[[A, B], [0, 0]]` system; no integration error enters the
//! problem. The objective is the trapezoidal quadrature of the thrust slack,
//! `sum_k w_k xi_k dt`, which the solver minimizes (fuel-optimality).
//!
//! Every inequality is grouped into a [`ConstraintBlock`] labeled with its
//! (family, node) pair. Blocks carry their flag index from the canonical
//! [`ConstraintLayout`]; the interior-node state constraints are also
//! enforced unconditionally at node 0 as unflagged blocks, so an initial
//! state outside the feasible envelope makes the full problem infeasible
//! rather than silently ignored.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::lcvx::glideslope::{glideslope_matrix, GlideslopeHalfspaces};
use crate::lcvx::layout::{ConstraintFamily, ConstraintLayout};
use crate::problem::{effective_thrust_bounds, MissionConfig, ProblemParameters};

// ---------------------------------------------------------------------------
// Variable indexing
// ---------------------------------------------------------------------------

/// Index helpers for the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vars {
    pub n_nodes: usize,
}

impl Vars {
    pub const PER_NODE: usize = 11;

    pub fn n_vars(&self) -> usize {
        Self::PER_NODE * self.n_nodes
    }

    pub fn r(&self, k: usize) -> [usize; 3] {
        let b = Self::PER_NODE * k;
        [b, b + 1, b + 2]
    }

    pub fn v(&self, k: usize) -> [usize; 3] {
        let b = Self::PER_NODE * k + 3;
        [b, b + 1, b + 2]
    }

    pub fn z(&self, k: usize) -> usize {
        Self::PER_NODE * k + 6
    }

    pub fn u(&self, k: usize) -> [usize; 3] {
        let b = Self::PER_NODE * k + 7;
        [b, b + 1, b + 2]
    }

    pub fn xi(&self, k: usize) -> usize {
        Self::PER_NODE * k + 10
    }
}

// ---------------------------------------------------------------------------
// Sparse rows and constraint blocks
// ---------------------------------------------------------------------------

/// Sparse linear functional `sum coeffs[i].1 * x[coeffs[i].0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    /// (variable index, coefficient), sorted by index.
    pub coeffs: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn new(mut coeffs: Vec<(usize, f64)>) -> Self {
        coeffs.sort_by_key(|c| c.0);
        debug_assert!(coeffs.windows(2).all(|w| w[0].0 < w[1].0), "duplicate variable index");
        Self { coeffs }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(i, c)| c * x[*i]).sum()
    }
}

/// A row paired with its right-hand side. Interpreted as `row·x = rhs` in
/// the equality list and `row·x <= rhs` inside a linear block.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub row: SparseRow,
    pub rhs: f64,
}

/// Affine expression `row·x + constant`, used for second-order-cone members.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub row: SparseRow,
    pub constant: f64,
}

impl Affine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.row.dot(x) + self.constant
    }
}

/// Conic body of one labeled constraint block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockBody {
    /// Conjunction of affine inequalities `row·x <= rhs`.
    Linear(Vec<LinearRow>),
    /// `|| (e_1, ..., e_m) ||_2 <= e_0` over affine members `e_i`.
    Soc(Vec<Affine>),
}

impl BlockBody {
    /// Number of scalar solver rows this block expands to.
    pub fn row_count(&self) -> usize {
        match self {
            BlockBody::Linear(rows) => rows.len(),
            BlockBody::Soc(members) => members.len(),
        }
    }
}

/// One selectively enforceable constraint: a (family, node) label, the flag
/// index it answers to (`None` for the unconditional node-0 state rows), and
/// its conic body.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub family: ConstraintFamily,
    pub node: usize,
    pub flag: Option<usize>,
    pub body: BlockBody,
}

// ---------------------------------------------------------------------------
// Mass envelope
// ---------------------------------------------------------------------------

/// Time since ignition at which the min-throttle mass trajectory reaches the
/// dry mass: an upper bound on any fuel-feasible flight time.
pub fn max_burn_time(mission: &MissionConfig, params: &ProblemParameters) -> f64 {
    let (rho_min, _) = effective_thrust_bounds(&mission.vehicle, params.phi);
    (mission.vehicle.m_wet - mission.vehicle.m_dry) / (mission.vehicle.alpha * rho_min)
}

/// Time at which the max-throttle reference mass hits zero; the mass-log
/// envelope is undefined at or beyond this horizon.
pub fn max_envelope_time(mission: &MissionConfig, params: &ProblemParameters) -> f64 {
    let (_, rho_max) = effective_thrust_bounds(&mission.vehicle, params.phi);
    mission.vehicle.m_wet / (mission.vehicle.alpha * rho_max)
}

/// Reference mass-log and normalized thrust bounds at time `t`:
/// `z0 = ln(m_wet - alpha*rho_max*t)`, `mu_min = rho_min*e^{-z0}`,
/// `mu_max = rho_max*e^{-z0}`.
pub fn mass_envelope(
    mission: &MissionConfig,
    params: &ProblemParameters,
    t: f64,
) -> Result<(f64, f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            field: "t",
            reason: format!("envelope time must be >= 0, got {t}"),
        });
    }
    let (rho_min, rho_max) = effective_thrust_bounds(&mission.vehicle, params.phi);
    let arg = mission.vehicle.m_wet - mission.vehicle.alpha * rho_max * t;
    if !(arg > 0.0) {
        return Err(Error::FuelExhausted { t, max: max_envelope_time(mission, params) });
    }
    Ok((arg.ln(), rho_min / arg, rho_max / arg))
}

/// Per-node mass-log envelope data for a fixed flight time.
#[derive(Debug, Clone, PartialEq)]
pub struct MassEnvelope {
    /// Node times `t_k = k * dt`.
    pub t: Vec<f64>,
    /// Lower mass-log bound `ln(m_wet - alpha*rho_max*t_k)` (also the
    /// linearization reference `z0`).
    pub z_lower: Vec<f64>,
    /// Upper mass-log bound `ln(m_wet - alpha*rho_min*t_k)`.
    pub z_upper: Vec<f64>,
    /// `rho_min * e^{-z_lower}` per node.
    pub mu_min: Vec<f64>,
    /// `rho_max * e^{-z_lower}` per node.
    pub mu_max: Vec<f64>,
}

fn envelope_table(
    mission: &MissionConfig,
    params: &ProblemParameters,
    t_f: f64,
    n_nodes: usize,
) -> Result<MassEnvelope> {
    let dt = t_f / (n_nodes - 1) as f64;
    let (rho_min, _) = effective_thrust_bounds(&mission.vehicle, params.phi);
    let alpha = mission.vehicle.alpha;
    let mut env = MassEnvelope {
        t: Vec::with_capacity(n_nodes),
        z_lower: Vec::with_capacity(n_nodes),
        z_upper: Vec::with_capacity(n_nodes),
        mu_min: Vec::with_capacity(n_nodes),
        mu_max: Vec::with_capacity(n_nodes),
    };
    for k in 0..n_nodes {
        let t_k = k as f64 * dt;
        let (z0, mu_min, mu_max) = mass_envelope(mission, params, t_k)?;
        let arg_upper = mission.vehicle.m_wet - alpha * rho_min * t_k;
        if !(arg_upper > 0.0) {
            return Err(Error::FuelExhausted { t: t_k, max: max_envelope_time(mission, params) });
        }
        env.t.push(t_k);
        env.z_lower.push(z0);
        env.z_upper.push(arg_upper.ln());
        env.mu_min.push(mu_min);
        env.mu_max.push(mu_max);
    }
    Ok(env)
}

// ---------------------------------------------------------------------------
// Exact discretization
// ---------------------------------------------------------------------------

/// Exact zero-order-hold discretization of the rotating-frame translational
/// dynamics: returns `(Ad, Bd)` with `x_{k+1} = Ad x_k + Bd (u_k + g)` for
/// the 6-state `x = (r, v)`.
pub fn zoh_matrices(omega: &Vector3<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = omega.cross_matrix();
    // Augmented [[A, B], [0, 0]] so one exponential yields both Ad and the
    // input integral Bd = int_0^dt e^{A s} ds B.
    let mut m = DMatrix::<f64>::zeros(9, 9);
    m.view_mut((0, 3), (3, 3)).copy_from(&Matrix3::identity());
    m.view_mut((3, 0), (3, 3)).copy_from(&(-w * w));
    m.view_mut((3, 3), (3, 3)).copy_from(&(-2.0 * w));
    m.view_mut((3, 6), (3, 3)).copy_from(&Matrix3::identity());
    let e = (m * dt).exp();
    let ad = e.view((0, 0), (6, 6)).into_owned();
    let bd = e.view((0, 6), (6, 3)).into_owned();
    (ad, bd)
}

// ---------------------------------------------------------------------------
// The discretized problem
// ---------------------------------------------------------------------------

/// A fully assembled conic problem instance at a fixed flight time.
/// Immutable once built; reductions construct a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSocp {
    pub mission: MissionConfig,
    pub params: ProblemParameters,
    pub n_nodes: usize,
    pub t_f: f64,
    pub dt: f64,
    pub vars: Vars,
    pub layout: ConstraintLayout,
    /// Linear objective coefficients (trapezoidal weights on `xi`).
    pub cost: Vec<f64>,
    /// Equality rows `row·x = rhs`: dynamics plus boundary conditions.
    pub equalities: Vec<LinearRow>,
    /// Labeled inequality blocks, flagged blocks first in flag order.
    pub blocks: Vec<ConstraintBlock>,
    pub envelope: MassEnvelope,
    pub halfspaces: GlideslopeHalfspaces,
    /// `None` for the full problem; `Some(retained flag count)` after
    /// reduction.
    pub retained_flags: Option<usize>,
}

impl DiscretizedSocp {
    pub fn n_vars(&self) -> usize {
        self.vars.n_vars()
    }

    /// Headline constraint count in the reporting convention used throughout
    /// this crate's summaries: the full problem counts 3 dynamics slots per
    /// node, 5 boundary slots, and one slot per (family, node) pair over all
    /// nine families and all nodes — `12N + 5` total. A reduced problem
    /// counts `3N + 5` plus one slot per retained flag.
    pub fn bookkeeping_constraints(&self) -> usize {
        let n = self.n_nodes;
        match self.retained_flags {
            None => 12 * n + 5,
            Some(retained) => 3 * n + 5 + retained,
        }
    }

    /// Total scalar solver rows (equalities plus inequality-block rows).
    pub fn solver_rows(&self) -> usize {
        self.equalities.len() + self.blocks.iter().map(|b| b.body.row_count()).sum::<usize>()
    }
}

/// Build the full problem for one parameter vector at flight time `t_f`.
pub fn build_socp(
    mission: &MissionConfig,
    params: &ProblemParameters,
    t_f: f64,
) -> Result<DiscretizedSocp> {
    mission.validate()?;
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "t_f",
            reason: format!("flight time must be positive and finite, got {t_f}"),
        });
    }
    let n = mission.n_nodes;
    let vars = Vars { n_nodes: n };
    let layout = ConstraintLayout::new(n)?;
    let dt = t_f / (n - 1) as f64;
    let envelope = envelope_table(mission, params, t_f, n)?;
    let halfspaces = glideslope_matrix(params.gamma_gs, mission.glideslope_faces)?;
    let (ad, bd) = zoh_matrices(&mission.omega(), dt);
    let gravity = mission.planet.gravity;
    let bd_g = &bd * gravity;
    let alpha = mission.vehicle.alpha;

    // Objective: trapezoidal quadrature of xi.
    let mut cost = vec![0.0; vars.n_vars()];
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        cost[vars.xi(k)] = w * dt;
    }

    // Equalities: exact-ZOH dynamics, mass-log depletion, boundary pins.
    let mut equalities = Vec::with_capacity(7 * (n - 1) + 13);
    for k in 0..n - 1 {
        // state indices 0..6 of node k are contiguous: r at +0..3, v at +3..6
        let xk = Vars::PER_NODE * k;
        let xk1 = Vars::PER_NODE * (k + 1);
        let uk = vars.u(k);
        for j in 0..6 {
            let mut coeffs = Vec::with_capacity(10);
            for i in 0..6 {
                let a = ad[(j, i)];
                if a != 0.0 {
                    coeffs.push((xk + i, a));
                }
            }
            for i in 0..3 {
                let b = bd[(j, i)];
                if b != 0.0 {
                    coeffs.push((uk[i], b));
                }
            }
            coeffs.push((xk1 + j, -1.0));
            equalities.push(LinearRow { row: SparseRow::new(coeffs), rhs: -bd_g[j] });
        }
        equalities.push(LinearRow {
            row: SparseRow::new(vec![
                (vars.z(k), -1.0),
                (vars.xi(k), alpha * dt),
                (vars.z(k + 1), 1.0),
            ]),
            rhs: 0.0,
        });
    }
    let pin = |idx: usize, value: f64| LinearRow {
        row: SparseRow::new(vec![(idx, 1.0)]),
        rhs: value,
    };
    for j in 0..3 {
        equalities.push(pin(vars.r(0)[j], params.r0[j]));
    }
    for j in 0..3 {
        equalities.push(pin(vars.v(0)[j], params.v0[j]));
    }
    equalities.push(pin(vars.z(0), mission.vehicle.m_wet.ln()));
    for j in 0..3 {
        equalities.push(pin(vars.r(n - 1)[j], 0.0));
    }
    for j in 0..3 {
        equalities.push(pin(vars.v(n - 1)[j], 0.0));
    }

    // Inequality blocks, flagged ones first in canonical flag order.
    let mut blocks = Vec::with_capacity(layout.flag_count() + 4);
    let body_for = |family: ConstraintFamily, k: usize| -> BlockBody {
        make_body(family, k, &vars, params, &envelope, &halfspaces, mission)
    };
    for family in ConstraintFamily::ALL {
        for k in layout.nodes_of(family) {
            blocks.push(ConstraintBlock {
                family,
                node: k,
                flag: Some(layout.flag_of(family, k).expect("node in family range")),
                body: body_for(family, k),
            });
        }
    }
    debug_assert!(blocks.iter().enumerate().all(|(i, b)| b.flag == Some(i)));
    // Unconditional node-0 state constraints (not part of the flag space).
    for family in [
        ConstraintFamily::Glideslope,
        ConstraintFamily::MaxVelocity,
        ConstraintFamily::MassLower,
        ConstraintFamily::MassUpper,
    ] {
        blocks.push(ConstraintBlock { family, node: 0, flag: None, body: body_for(family, 0) });
    }

    Ok(DiscretizedSocp {
        mission: mission.clone(),
        params: *params,
        n_nodes: n,
        t_f,
        dt,
        vars,
        layout,
        cost,
        equalities,
        blocks,
        envelope,
        halfspaces,
        retained_flags: None,
    })
}

/// Conic body of the (family, node) constraint.
fn make_body(
    family: ConstraintFamily,
    k: usize,
    vars: &Vars,
    params: &ProblemParameters,
    env: &MassEnvelope,
    hs: &GlideslopeHalfspaces,
    mission: &MissionConfig,
) -> BlockBody {
    let z = vars.z(k);
    let xi = vars.xi(k);
    match family {
        // mu_min*(1 - dz + dz^2/2) <= xi with dz = z - z_lower, via the
        // standard cone lift: with l = xi - mu_min + mu_min*dz and
        // a = sqrt(mu_min)*dz, the quadratic is a^2 <= 2l, i.e.
        // ||(a, l - 1/2)|| <= l + 1/2.
        ConstraintFamily::ThrustLower => {
            let mu = env.mu_min[k];
            let z0 = env.z_lower[k];
            let l_coeffs = vec![(z, mu), (xi, 1.0)];
            let l_const = -mu * (1.0 + z0);
            BlockBody::Soc(vec![
                Affine { row: SparseRow::new(l_coeffs.clone()), constant: l_const + 0.5 },
                Affine { row: SparseRow::new(vec![(z, mu.sqrt())]), constant: -mu.sqrt() * z0 },
                Affine { row: SparseRow::new(l_coeffs), constant: l_const - 0.5 },
            ])
        }
        // xi <= mu_max*(1 - dz)  <=>  xi + mu_max*z <= mu_max*(1 + z_lower)
        ConstraintFamily::ThrustUpper => {
            let mu = env.mu_max[k];
            BlockBody::Linear(vec![LinearRow {
                row: SparseRow::new(vec![(z, mu), (xi, 1.0)]),
                rhs: mu * (1.0 + env.z_lower[k]),
            }])
        }
        // ||u|| <= xi
        ConstraintFamily::ThrustNorm => {
            let u = vars.u(k);
            let mut members = vec![Affine { row: SparseRow::new(vec![(xi, 1.0)]), constant: 0.0 }];
            members.extend(
                u.iter().map(|&j| Affine { row: SparseRow::new(vec![(j, 1.0)]), constant: 0.0 }),
            );
            BlockBody::Soc(members)
        }
        // cos(gamma_p)*xi <= u_z
        ConstraintFamily::Pointing => BlockBody::Linear(vec![LinearRow {
            row: SparseRow::new(vec![(xi, params.gamma_p.cos()), (vars.u(k)[2], -1.0)]),
            rhs: 0.0,
        }]),
        // H r <= h, one flag for all faces
        ConstraintFamily::Glideslope => {
            let r = vars.r(k);
            BlockBody::Linear(
                hs.normals
                    .iter()
                    .zip(&hs.offsets)
                    .map(|(nrm, h)| LinearRow {
                        row: SparseRow::new(vec![(r[0], nrm.x), (r[1], nrm.y), (r[2], nrm.z)]),
                        rhs: *h,
                    })
                    .collect(),
            )
        }
        // ||v|| <= v_max
        ConstraintFamily::MaxVelocity => {
            let v = vars.v(k);
            let mut members = vec![Affine {
                row: SparseRow::new(Vec::new()),
                constant: mission.vehicle.v_max,
            }];
            members.extend(
                v.iter().map(|&j| Affine { row: SparseRow::new(vec![(j, 1.0)]), constant: 0.0 }),
            );
            BlockBody::Soc(members)
        }
        // z_lower <= z
        ConstraintFamily::MassLower => BlockBody::Linear(vec![LinearRow {
            row: SparseRow::new(vec![(z, -1.0)]),
            rhs: -env.z_lower[k],
        }]),
        // z <= z_upper
        ConstraintFamily::MassUpper => BlockBody::Linear(vec![LinearRow {
            row: SparseRow::new(vec![(z, 1.0)]),
            rhs: env.z_upper[k],
        }]),
        // ln(m_dry) <= z at the final node
        ConstraintFamily::DryMass => BlockBody::Linear(vec![LinearRow {
            row: SparseRow::new(vec![(z, -1.0)]),
            rhs: -mission.vehicle.m_dry.ln(),
        }]),
    }
}
