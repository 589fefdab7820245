//! Conic solves and the free-final-time line search.
//!
//! [`solve_conic`] adapts a [`DiscretizedSocp`] to the embedded
//! interior-point solver; [`full_solve`] minimizes fuel over the flight time
//! with a coarse grid plus golden-section refinement; [`reduced_solve`] is
//! the single fixed-time solve of a strategy-reduced problem. Wrappers for
//! tight-set extraction and feasibility checking enforce solution-status
//! preconditions on top of the pure residual evaluators.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcvx::socp::{build_socp, max_burn_time, BlockBody, DiscretizedSocp};
use crate::lcvx::strategy::{
    feasibility_at, reduce_problem, tight_flags_at, FeasibilityReport, Strategy,
};
use crate::problem::{MissionConfig, ProblemParameters};

/// Default scaled-residual tolerance for calling a constraint tight.
pub const DEFAULT_TIGHT_TOL: f64 = 1e-6;
/// Default scaled-violation tolerance for inequality feasibility.
pub const DEFAULT_FEAS_TOL: f64 = 1e-5;
/// Default scaled-residual tolerance for equality feasibility.
pub const DEFAULT_EQ_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Verdict of one conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        })
    }
}

/// Node-indexed solution trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub r: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub z: Vec<f64>,
    pub u: Vec<Vector3<f64>>,
    pub xi: Vec<f64>,
}

impl Trajectory {
    pub fn n_nodes(&self) -> usize {
        self.t.len()
    }

    /// Decode from the stacked decision vector (11 scalars per node).
    pub fn from_stacked(x: &[f64], n_nodes: usize, t_f: f64) -> Result<Self> {
        if x.len() != 11 * n_nodes {
            return Err(Error::DimensionMismatch(format!(
                "stacked vector has {} scalars, expected {}",
                x.len(),
                11 * n_nodes
            )));
        }
        let dt = t_f / (n_nodes - 1) as f64;
        let mut out = Trajectory {
            t: Vec::with_capacity(n_nodes),
            r: Vec::with_capacity(n_nodes),
            v: Vec::with_capacity(n_nodes),
            z: Vec::with_capacity(n_nodes),
            u: Vec::with_capacity(n_nodes),
            xi: Vec::with_capacity(n_nodes),
        };
        for k in 0..n_nodes {
            let b = 11 * k;
            out.t.push(k as f64 * dt);
            out.r.push(Vector3::new(x[b], x[b + 1], x[b + 2]));
            out.v.push(Vector3::new(x[b + 3], x[b + 4], x[b + 5]));
            out.z.push(x[b + 6]);
            out.u.push(Vector3::new(x[b + 7], x[b + 8], x[b + 9]));
            out.xi.push(x[b + 10]);
        }
        Ok(out)
    }

    /// Re-stack into the decision-vector layout.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(11 * self.n_nodes());
        for k in 0..self.n_nodes() {
            x.extend_from_slice(self.r[k].as_slice());
            x.extend_from_slice(self.v[k].as_slice());
            x.push(self.z[k]);
            x.extend_from_slice(self.u[k].as_slice());
            x.push(self.xi[k]);
        }
        x
    }

    /// Vehicle mass at node `k` (the decision variable is the mass-log).
    pub fn mass(&self, k: usize) -> f64 {
        self.z[k].exp()
    }

    pub fn final_mass(&self) -> f64 {
        self.mass(self.n_nodes() - 1)
    }

    /// Node-indexed CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("node,t,rx,ry,rz,vx,vy,vz,z,mass,ux,uy,uz,xi\n");
        for k in 0..self.n_nodes() {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                k,
                self.t[k],
                self.r[k].x,
                self.r[k].y,
                self.r[k].z,
                self.v[k].x,
                self.v[k].y,
                self.v[k].z,
                self.z[k],
                self.mass(k),
                self.u[k].x,
                self.u[k].y,
                self.u[k].z,
                self.xi[k],
            ));
        }
        out
    }
}

/// Diagnostics from one free-final-time line search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSearchDiagnostics {
    /// `(t_f, cost)` pairs sorted by flight time; infeasible times carry
    /// `inf`.
    pub evaluations: Vec<(f64, f64)>,
    /// Grid times skipped because they exceed the propellant-depletion bound.
    pub skipped: Vec<f64>,
    /// Wall time of the single most expensive inner conic solve, ms.
    pub max_inner_ms: f64,
    /// Whether the finite grid costs formed one contiguous interval (the
    /// refinement step assumes local unimodality; violations are logged).
    pub contiguous_feasible: bool,
}

/// Outcome of one solve (fixed-time, reduced, or full line search).
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective value; finite iff `status == Optimal`.
    pub cost: f64,
    /// Flight time of the solved problem (best time for a line search;
    /// 0 when a line search found no feasible time).
    pub t_f: f64,
    pub wall_time_ms: f64,
    pub iterations: u32,
    /// Raw backend termination status, for diagnostics.
    pub solver_detail: String,
    pub trajectory: Option<Trajectory>,
    /// Present on results produced by [`full_solve`].
    pub line_search: Option<LineSearchDiagnostics>,
}

impl SolveResult {
    /// Compact JSON summary (status, cost, t_f, wall time, iterations).
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            status: SolveStatus,
            cost: Option<f64>,
            t_f: f64,
            wall_time_ms: f64,
            iterations: u32,
            solver_detail: &'a str,
        }
        serde_json::to_string_pretty(&Summary {
            status: self.status,
            cost: self.cost.is_finite().then_some(self.cost),
            t_f: self.t_f,
            wall_time_ms: self.wall_time_ms,
            iterations: self.iterations,
            solver_detail: &self.solver_detail,
        })
        .expect("summary serializes")
    }
}

// ---------------------------------------------------------------------------
// Backend adapter
// ---------------------------------------------------------------------------

struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    fn to_csc(mut self) -> CscMatrix<f64> {
        self.entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; self.ncols + 1];
        for &(_, c, _) in &self.entries {
            colptr[c + 1] += 1;
        }
        for c in 0..self.ncols {
            colptr[c + 1] += colptr[c];
        }
        let rowval: Vec<usize> = self.entries.iter().map(|e| e.0).collect();
        let nzval: Vec<f64> = self.entries.iter().map(|e| e.2).collect();
        CscMatrix::new(self.nrows, self.ncols, colptr, rowval, nzval)
    }
}

/// Solve one assembled problem with the embedded interior-point backend.
pub fn solve_conic(socp: &DiscretizedSocp) -> Result<SolveResult> {
    let n = socp.n_vars();
    let mut a = TripletMatrix { nrows: 0, ncols: n, entries: Vec::new() };
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // equality rows: A x = b on the zero cone
    for eq in &socp.equalities {
        for &(col, val) in &eq.row.coeffs {
            a.entries.push((a.nrows, col, val));
        }
        b.push(eq.rhs);
        a.nrows += 1;
    }
    if !socp.equalities.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(socp.equalities.len()));
    }

    // inequality blocks; consecutive linear rows merge into one cone
    let mut nonneg_run = 0usize;
    for block in &socp.blocks {
        match &block.body {
            BlockBody::Linear(rows) => {
                for row in rows {
                    for &(col, val) in &row.row.coeffs {
                        a.entries.push((a.nrows, col, val));
                    }
                    b.push(row.rhs);
                    a.nrows += 1;
                    nonneg_run += 1;
                }
            }
            BlockBody::Soc(members) => {
                if nonneg_run > 0 {
                    cones.push(SupportedConeT::NonnegativeConeT(nonneg_run));
                    nonneg_run = 0;
                }
                for member in members {
                    // member(x) = row·x + c must equal s = b - A x, so the
                    // assembled row is negated and b carries the constant.
                    for &(col, val) in &member.row.coeffs {
                        a.entries.push((a.nrows, col, -val));
                    }
                    b.push(member.constant);
                    a.nrows += 1;
                }
                cones.push(SupportedConeT::SecondOrderConeT(members.len()));
            }
        }
    }
    if nonneg_run > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg_run));
    }

    let a = a.to_csc();
    let p = CscMatrix::new(n, n, vec![0; n + 1], Vec::new(), Vec::new());
    let tol = socp.mission.solver.tol;
    let settings = DefaultSettingsBuilder::default()
        .verbose(socp.mission.solver.verbose)
        .max_iter(socp.mission.solver.max_iter)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .build()
        .map_err(|e| Error::Solver(format!("invalid backend settings: {e}")))?;

    let start = Instant::now();
    let mut solver = DefaultSolver::new(&p, &socp.cost, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("backend rejected the problem: {e:?}")))?;
    solver.solve();
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    let raw_status = solver.solution.status;
    let detail = format!("{raw_status:?}");
    let status = match raw_status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalFailure,
    };
    let (status, cost, trajectory) = if status == SolveStatus::Optimal {
        let cost = solver.solution.obj_val;
        if cost.is_finite() {
            let mut trajectory =
                Trajectory::from_stacked(&solver.solution.x, socp.n_nodes, socp.t_f)?;
            // The terminal control multiplies no interval under zero-order
            // hold, so every vector in its cone is optimal and the
            // interior-point backend returns a centered one. Select the
            // canonical representative instead: vertical thrust at the
            // cost-pinned magnitude. It satisfies the thrust-norm cone with
            // equality and the pointing cone with maximal slack, keeps the
            // cost unchanged, and makes extraction deterministic.
            let last = trajectory.n_nodes() - 1;
            trajectory.u[last] = Vector3::new(0.0, 0.0, trajectory.xi[last]);
            (SolveStatus::Optimal, cost, Some(trajectory))
        } else {
            (SolveStatus::NumericalFailure, f64::INFINITY, None)
        }
    } else {
        (status, f64::INFINITY, None)
    };
    Ok(SolveResult {
        status,
        cost,
        t_f: socp.t_f,
        wall_time_ms,
        iterations: solver.solution.iterations,
        solver_detail: detail,
        trajectory,
        line_search: None,
    })
}

// ---------------------------------------------------------------------------
// Extraction / feasibility wrappers
// ---------------------------------------------------------------------------

/// Read the tight-constraint strategy off an optimal solution of `socp`.
pub fn extract_tight_constraints(
    socp: &DiscretizedSocp,
    result: &SolveResult,
    tol: f64,
) -> Result<Strategy> {
    if result.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "tight-set extraction requires an optimal solution, got {}",
            result.status
        )));
    }
    let trajectory = result
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Solver("optimal result lacks a trajectory".into()))?;
    let tau = tight_flags_at(socp, &trajectory.to_stacked(), tol)?;
    Strategy::new(tau, socp.t_f)
}

/// Evaluate a candidate solve's trajectory against every constraint of
/// `socp` (normally the *full* problem, to vet a reduced-problem solution).
pub fn check_feasibility(
    socp: &DiscretizedSocp,
    candidate: &SolveResult,
    tol: f64,
    tol_eq: f64,
) -> Result<FeasibilityReport> {
    let trajectory = candidate
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Solver("candidate has no trajectory to check".into()))?;
    feasibility_at(socp, &trajectory.to_stacked(), tol, tol_eq)
}

// ---------------------------------------------------------------------------
// Free-final-time line search
// ---------------------------------------------------------------------------

/// Search parameters for [`full_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Shortest flight time to consider, s.
    pub t_lo: f64,
    /// Longest flight time to consider, s; `None` uses the propellant
    /// depletion bound `(m_wet - m_dry) / (alpha * rho_min)`.
    pub t_hi: Option<f64>,
    /// Coarse grid points across `[t_lo, t_hi]`.
    pub coarse_grid: usize,
    /// Stop refining when the bracket is this narrow, s.
    pub refine_tol: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { t_lo: 5.0, t_hi: None, coarse_grid: 20, refine_tol: 0.1 }
    }
}

/// Minimize fuel cost over the flight time: coarse grid, then golden-section
/// refinement around the best grid point. Infeasible times score `+inf`;
/// grid times beyond the propellant bound are skipped outright. Ties in cost
/// break toward the smaller flight time.
pub fn full_solve(
    mission: &MissionConfig,
    params: &ProblemParameters,
    config: &LineSearchConfig,
) -> Result<SolveResult> {
    full_solve_impl(mission, params, config, None)
}

/// [`full_solve`] with grid points evaluated nearest-to-`t_center` first.
/// Every grid point is still evaluated, so the returned optimum is identical
/// to `full_solve`'s — only the evaluation order (and hence which solve warms
/// the CPU caches first) changes. Used by the online fallback, which has a
/// predicted flight time in hand.
pub fn full_solve_around(
    mission: &MissionConfig,
    params: &ProblemParameters,
    config: &LineSearchConfig,
    t_center: f64,
) -> Result<SolveResult> {
    full_solve_impl(mission, params, config, Some(t_center))
}

fn full_solve_impl(
    mission: &MissionConfig,
    params: &ProblemParameters,
    config: &LineSearchConfig,
    focus: Option<f64>,
) -> Result<SolveResult> {
    let start = Instant::now();
    let burn_bound = max_burn_time(mission, params);
    let t_hi = config.t_hi.unwrap_or(burn_bound);
    if !(config.t_lo > 0.0 && config.t_lo < t_hi) {
        return Err(Error::InvalidParameter {
            field: "t_lo",
            reason: format!("need 0 < t_lo < t_hi, got {} vs {t_hi}", config.t_lo),
        });
    }
    if config.coarse_grid < 3 {
        return Err(Error::InvalidParameter {
            field: "coarse_grid",
            reason: format!("need >= 3 grid points, got {}", config.coarse_grid),
        });
    }
    if !(config.refine_tol > 0.0) {
        return Err(Error::InvalidParameter {
            field: "refine_tol",
            reason: "refinement tolerance must be > 0".into(),
        });
    }

    let mut diag = LineSearchDiagnostics {
        evaluations: Vec::new(),
        skipped: Vec::new(),
        max_inner_ms: 0.0,
        contiguous_feasible: true,
    };
    let mut best: Option<SolveResult> = None;

    // One fixed-time evaluation; fuel exhaustion counts as +inf, not error.
    let mut evaluate = |t: f64, diag: &mut LineSearchDiagnostics| -> Result<f64> {
        let socp = match build_socp(mission, params, t) {
            Ok(socp) => socp,
            Err(Error::FuelExhausted { .. }) => {
                diag.evaluations.push((t, f64::INFINITY));
                return Ok(f64::INFINITY);
            }
            Err(e) => return Err(e),
        };
        let result = solve_conic(&socp)?;
        diag.max_inner_ms = diag.max_inner_ms.max(result.wall_time_ms);
        diag.evaluations.push((t, result.cost));
        let cost = result.cost;
        let better = match &best {
            None => result.status == SolveStatus::Optimal,
            Some(b) => cost < b.cost || (cost == b.cost && t < b.t_f),
        };
        if better {
            best = Some(result);
        }
        Ok(cost)
    };

    // coarse grid, ascending; evaluation order optionally centered on a
    // predicted flight time (outcome is order-independent)
    let g = config.coarse_grid;
    let mut grid_times = Vec::with_capacity(g);
    for i in 0..g {
        let t = config.t_lo + (t_hi - config.t_lo) * i as f64 / (g - 1) as f64;
        if t > burn_bound * (1.0 + 1e-12) {
            diag.skipped.push(t);
            continue;
        }
        grid_times.push(t);
    }
    let mut order: Vec<usize> = (0..grid_times.len()).collect();
    if let Some(center) = focus {
        order.sort_by(|&a, &b| {
            let da = (grid_times[a] - center).abs();
            let db = (grid_times[b] - center).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
    }
    let mut grid_costs = vec![f64::INFINITY; grid_times.len()];
    for &i in &order {
        grid_costs[i] = evaluate(grid_times[i], &mut diag)?;
    }

    // contiguity diagnostic: finite costs should form one interval
    let finite: Vec<bool> = grid_costs.iter().map(|c| c.is_finite()).collect();
    let runs = finite.windows(2).filter(|w| w[0] != w[1]).count();
    let contiguous = match (finite.first(), finite.last()) {
        (Some(_), Some(_)) => runs <= 2 && !(runs == 2 && finite[0]),
        _ => true,
    };
    if !contiguous {
        log::warn!(
            "fuel cost is not unimodal on the coarse grid (feasible interval is fragmented); \
             refinement may miss the global best flight time"
        );
        diag.contiguous_feasible = false;
    }

    if let Some(best_idx) = (0..grid_costs.len()).min_by(|&i, &j| {
        (grid_costs[i], grid_times[i]).partial_cmp(&(grid_costs[j], grid_times[j])).unwrap()
    }) {
        if grid_costs[best_idx].is_finite() {
            // golden-section refinement on the bracketing neighbors
            const INV_PHI: f64 = 0.618_033_988_749_895;
            let mut lo = grid_times[best_idx.saturating_sub(1)];
            let mut hi = grid_times[(best_idx + 1).min(grid_times.len() - 1)];
            if hi - lo > config.refine_tol {
                let mut c = hi - (hi - lo) * INV_PHI;
                let mut d = lo + (hi - lo) * INV_PHI;
                let mut fc = evaluate(c, &mut diag)?;
                let mut fd = evaluate(d, &mut diag)?;
                while hi - lo > config.refine_tol {
                    if (fc, c) <= (fd, d) {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - (hi - lo) * INV_PHI;
                        fc = evaluate(c, &mut diag)?;
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + (hi - lo) * INV_PHI;
                        fd = evaluate(d, &mut diag)?;
                    }
                }
            }
        }
    }

    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    diag.evaluations
        .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(match best {
        Some(mut result) => {
            result.wall_time_ms = wall_time_ms;
            result.line_search = Some(diag);
            result
        }
        None => SolveResult {
            status: SolveStatus::Infeasible,
            cost: f64::INFINITY,
            t_f: 0.0,
            wall_time_ms,
            iterations: 0,
            solver_detail: "no feasible flight time on the search grid".into(),
            trajectory: None,
            line_search: Some(diag),
        },
    })
}

/// Single fixed-time solve of the strategy-reduced problem. A flight time
/// beyond the fuel-exhaustion horizon reports as infeasible rather than an
/// error, so the online loop can fall back uniformly.
pub fn reduced_solve(
    mission: &MissionConfig,
    params: &ProblemParameters,
    strategy: &Strategy,
) -> Result<SolveResult> {
    let start = Instant::now();
    let socp = match build_socp(mission, params, strategy.t_f_star) {
        Ok(socp) => socp,
        Err(Error::FuelExhausted { t, max }) => {
            return Ok(SolveResult {
                status: SolveStatus::Infeasible,
                cost: f64::INFINITY,
                t_f: strategy.t_f_star,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                iterations: 0,
                solver_detail: format!(
                    "flight time {t:.3} s exceeds the fuel-exhaustion horizon {max:.3} s"
                ),
                trajectory: None,
                line_search: None,
            })
        }
        Err(e) => return Err(e),
    };
    let reduced = reduce_problem(&socp, strategy)?;
    solve_conic(&reduced)
}
