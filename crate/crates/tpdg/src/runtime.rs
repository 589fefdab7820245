//! The online guidance loop with a guaranteed-feasible result.
//!
//! One call runs: predict a candidate strategy from the problem parameters,
//! solve the cheap strategy-reduced problem at the predicted flight time,
//! verify the candidate trajectory against *every* constraint of the full
//! problem, and fall back to the full free-final-time solve whenever the
//! reduced route fails to deliver a verified optimum. The returned solution
//! is therefore feasible for every parameter vector whose full problem is
//! feasible — mispredictions cost time, never correctness.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::lcvx::{build_socp, FeasibilityReport, Strategy};
use crate::nn::{ModelBundle, PredictOptions};
use crate::problem::{MissionConfig, ProblemParameters};
use crate::solver::{
    check_feasibility, full_solve, full_solve_around, reduced_solve, LineSearchConfig,
    SolveResult, SolveStatus, DEFAULT_EQ_TOL, DEFAULT_FEAS_TOL,
};

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

// ---------------------------------------------------------------------------
// Strategy sources
// ---------------------------------------------------------------------------

/// Anything that can produce a candidate strategy for a parameter vector:
/// the trained model pair, a fixed oracle, or a test closure.
pub trait StrategyPredictor {
    fn predict(&self, mission: &MissionConfig, params: &ProblemParameters) -> Result<Strategy>;
}

/// The trained constraint/time model pair.
pub struct ModelPredictor<'a> {
    pub constraint_model: &'a ModelBundle,
    pub time_model: &'a ModelBundle,
    pub options: PredictOptions,
}

impl StrategyPredictor for ModelPredictor<'_> {
    fn predict(&self, mission: &MissionConfig, params: &ProblemParameters) -> Result<Strategy> {
        crate::nn::predict_strategy(
            self.constraint_model,
            self.time_model,
            mission,
            params,
            &self.options,
        )
    }
}

/// A fixed strategy, independent of the parameters — oracle injection.
pub struct FixedStrategy(pub Strategy);

impl StrategyPredictor for FixedStrategy {
    fn predict(&self, _: &MissionConfig, _: &ProblemParameters) -> Result<Strategy> {
        Ok(self.0.clone())
    }
}

impl<F> StrategyPredictor for F
where
    F: Fn(&MissionConfig, &ProblemParameters) -> Result<Strategy>,
{
    fn predict(&self, mission: &MissionConfig, params: &ProblemParameters) -> Result<Strategy> {
        self(mission, params)
    }
}

// ---------------------------------------------------------------------------
// Outcome
// ---------------------------------------------------------------------------

/// Which route produced the returned solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathTaken {
    /// The reduced solution passed the full-problem check.
    ReducedAccepted,
    /// The reduced problem had no finite optimum; the full solve answered.
    FallbackAfterInfeasibleReduced,
    /// The reduced optimum violated a dropped constraint; the full solve
    /// answered.
    FallbackAfterFailedFeasibilityCheck,
    /// Even the full problem is infeasible — no trajectory exists.
    FullInfeasible,
}

impl PathTaken {
    pub fn as_str(self) -> &'static str {
        match self {
            PathTaken::ReducedAccepted => "reduced_accepted",
            PathTaken::FallbackAfterInfeasibleReduced => "fallback_after_infeasible_reduced",
            PathTaken::FallbackAfterFailedFeasibilityCheck => {
                "fallback_after_failed_feasibility_check"
            }
            PathTaken::FullInfeasible => "full_infeasible",
        }
    }
}

impl std::fmt::Display for PathTaken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wall time of each stage that actually ran, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prediction_ms: Option<f64>,
    pub reduced_solve_ms: Option<f64>,
    pub feasibility_check_ms: Option<f64>,
    pub full_solve_ms: Option<f64>,
}

impl StageTimings {
    /// Total across the stages that ran.
    pub fn total_ms(&self) -> f64 {
        [
            self.prediction_ms,
            self.reduced_solve_ms,
            self.feasibility_check_ms,
            self.full_solve_ms,
        ]
        .iter()
        .flatten()
        .sum()
    }
}

/// Result of one online call: the solution, how it was obtained, and the
/// evidence.
#[derive(Debug, Clone)]
pub struct TpdgOutcome {
    pub solution: SolveResult,
    pub path_taken: PathTaken,
    pub timings: StageTimings,
    /// The predicted candidate strategy that drove the reduced attempt.
    pub strategy: Strategy,
    /// Residuals of the returned solution against the full problem at its
    /// flight time, whenever a trajectory exists. On the accepted path this
    /// is the verdict of the accept decision itself.
    pub feasibility: Option<FeasibilityReport>,
}

impl TpdgOutcome {
    pub fn total_ms(&self) -> f64 {
        self.timings.total_ms()
    }

    /// Machine-readable one-call record.
    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "path_taken": self.path_taken.as_str(),
            "status": self.solution.status,
            "cost": if self.solution.cost.is_finite() { Some(self.solution.cost) } else { None },
            "t_f": self.solution.t_f,
            "strategy": {
                "retained": self.strategy.retained(),
                "flags": self.strategy.tau.len(),
                "t_f_star": self.strategy.t_f_star,
            },
            "timings": self.timings,
            "total_ms": self.total_ms(),
            "feasibility": self.feasibility.as_ref().map(|r| json!({
                "feasible": r.feasible,
                "worst_violation": r.worst_violation,
                "worst_equality_violation": r.worst_equality_violation,
                "worst_inequality_violation": r.worst_inequality_violation,
            })),
        })
    }
}

// ---------------------------------------------------------------------------
// The online procedure
// ---------------------------------------------------------------------------

/// One online guidance call.
///
/// Control flow: predict → reduced solve → (if the reduced problem has an
/// optimum) residual check against the full problem at the predicted flight
/// time → accept, or fall back to the full line search (grid evaluated
/// nearest the predicted flight time first). Prediction failures (wrong
/// layout, mission mismatch) are hard errors, not fallbacks — they mean the
/// models cannot legitimately answer for this mission.
pub fn tpdg(
    mission: &MissionConfig,
    params: &ProblemParameters,
    predictor: &dyn StrategyPredictor,
    search: &LineSearchConfig,
) -> Result<TpdgOutcome> {
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let strategy = predictor.predict(mission, params)?;
    timings.prediction_ms = Some(elapsed_ms(t));

    let t = Instant::now();
    let reduced = reduced_solve(mission, params, &strategy)?;
    timings.reduced_solve_ms = Some(elapsed_ms(t));

    if reduced.status == SolveStatus::Optimal {
        let t = Instant::now();
        let full_problem = build_socp(mission, params, strategy.t_f_star)?;
        let report = check_feasibility(&full_problem, &reduced, DEFAULT_FEAS_TOL, DEFAULT_EQ_TOL)?;
        timings.feasibility_check_ms = Some(elapsed_ms(t));
        if report.feasible {
            return Ok(TpdgOutcome {
                solution: reduced,
                path_taken: PathTaken::ReducedAccepted,
                timings,
                strategy,
                feasibility: Some(report),
            });
        }
    }

    // fallback: the full problem, grid seeded around the predicted time
    let fallback_path = if timings.feasibility_check_ms.is_some() {
        PathTaken::FallbackAfterFailedFeasibilityCheck
    } else {
        PathTaken::FallbackAfterInfeasibleReduced
    };
    let t = Instant::now();
    let full = full_solve_around(mission, params, search, strategy.t_f_star)?;
    timings.full_solve_ms = Some(elapsed_ms(t));

    if full.status == SolveStatus::Optimal {
        // record the returned solution's own residuals
        let socp = build_socp(mission, params, full.t_f)?;
        let report = check_feasibility(&socp, &full, DEFAULT_FEAS_TOL, DEFAULT_EQ_TOL)?;
        Ok(TpdgOutcome {
            solution: full,
            path_taken: fallback_path,
            timings,
            strategy,
            feasibility: Some(report),
        })
    } else {
        Ok(TpdgOutcome {
            solution: full,
            path_taken: PathTaken::FullInfeasible,
            timings,
            strategy,
            feasibility: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Paired benchmark
// ---------------------------------------------------------------------------

/// Per-parameter-vector benchmark record (no trajectories — summary only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCase {
    pub index: usize,
    pub full_status: SolveStatus,
    pub full_cost: Option<f64>,
    pub full_ms: f64,
    pub full_t_f: f64,
    pub path: PathTaken,
    pub tpdg_status: SolveStatus,
    pub tpdg_cost: Option<f64>,
    pub tpdg_ms: f64,
    pub tpdg_t_f: f64,
    pub prediction_ms: Option<f64>,
    pub reduced_solve_ms: Option<f64>,
    pub feasibility_check_ms: Option<f64>,
    pub fallback_ms: Option<f64>,
    /// `(tpdg_cost - full_cost) / |full_cost|` when both solves are optimal.
    pub suboptimality_gap: Option<f64>,
}

/// One aggregated timing/feasibility row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    /// Fraction of cases that produced a feasible optimal solution.
    pub feasible_fraction: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Aggregated timing of one pipeline stage, over the cases where it ran.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub count: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Paired comparison of the full solver and the online procedure over one
/// parameter batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_cases: usize,
    /// One row per algorithm (`full_lcvx`, `tpdg`), same case set for both.
    pub algorithms: Vec<BenchRow>,
    /// Stage timing breakdown of the online procedure.
    pub stages: Vec<StageStats>,
    pub path_counts: BTreeMap<String, usize>,
    /// Fraction of cases answered by the reduced problem alone.
    pub reduced_accepted_fraction: f64,
    /// Mean full-solve time over mean online time.
    pub speedup: f64,
    /// Mean suboptimality gap over cases where both routes were optimal.
    pub mean_suboptimality_gap: Option<f64>,
    pub cases: Vec<BenchCase>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run `full_solve` and [`tpdg`] on every parameter vector and aggregate
/// paired statistics. Cases run sequentially so wall-clock timings are not
/// distorted by contention.
pub fn bench(
    mission: &MissionConfig,
    thetas: &[ProblemParameters],
    predictor: &dyn StrategyPredictor,
    search: &LineSearchConfig,
) -> Result<BenchReport> {
    let mut cases = Vec::with_capacity(thetas.len());
    for (index, theta) in thetas.iter().enumerate() {
        let full = full_solve(mission, theta, search)?;
        let outcome = tpdg(mission, theta, predictor, search)?;
        let full_optimal = full.status == SolveStatus::Optimal;
        let tpdg_optimal = outcome.solution.status == SolveStatus::Optimal;
        let suboptimality_gap = (full_optimal && tpdg_optimal).then(|| {
            (outcome.solution.cost - full.cost) / full.cost.abs().max(f64::MIN_POSITIVE)
        });
        cases.push(BenchCase {
            index,
            full_status: full.status,
            full_cost: full_optimal.then_some(full.cost),
            full_ms: full.wall_time_ms,
            full_t_f: full.t_f,
            path: outcome.path_taken,
            tpdg_status: outcome.solution.status,
            tpdg_cost: tpdg_optimal.then_some(outcome.solution.cost),
            tpdg_ms: outcome.total_ms(),
            tpdg_t_f: outcome.solution.t_f,
            prediction_ms: outcome.timings.prediction_ms,
            reduced_solve_ms: outcome.timings.reduced_solve_ms,
            feasibility_check_ms: outcome.timings.feasibility_check_ms,
            fallback_ms: outcome.timings.full_solve_ms,
            suboptimality_gap,
        });
    }

    let n_cases = cases.len();
    let full_times: Vec<f64> = cases.iter().map(|c| c.full_ms).collect();
    let tpdg_times: Vec<f64> = cases.iter().map(|c| c.tpdg_ms).collect();
    let (full_mean, full_std) = mean_std(&full_times);
    let (tpdg_mean, tpdg_std) = mean_std(&tpdg_times);
    let frac = |hits: usize| {
        if n_cases == 0 { 0.0 } else { hits as f64 / n_cases as f64 }
    };
    let algorithms = vec![
        BenchRow {
            name: "full_lcvx".to_string(),
            feasible_fraction: frac(
                cases.iter().filter(|c| c.full_status == SolveStatus::Optimal).count(),
            ),
            mean_ms: full_mean,
            std_ms: full_std,
        },
        BenchRow {
            name: "tpdg".to_string(),
            feasible_fraction: frac(
                cases.iter().filter(|c| c.tpdg_status == SolveStatus::Optimal).count(),
            ),
            mean_ms: tpdg_mean,
            std_ms: tpdg_std,
        },
    ];

    let stage_stats = |name: &str, pick: fn(&BenchCase) -> Option<f64>| {
        let values: Vec<f64> = cases.iter().filter_map(pick).collect();
        let (mean_ms, std_ms) = mean_std(&values);
        StageStats { stage: name.to_string(), count: values.len(), mean_ms, std_ms }
    };
    let stages = vec![
        stage_stats("prediction", |c| c.prediction_ms),
        stage_stats("reduced_solve", |c| c.reduced_solve_ms),
        stage_stats("feasibility_check", |c| c.feasibility_check_ms),
        stage_stats("fallback_full_solve", |c| c.fallback_ms),
    ];

    let mut path_counts = BTreeMap::new();
    for case in &cases {
        *path_counts.entry(case.path.as_str().to_string()).or_insert(0) += 1;
    }
    let reduced_accepted_fraction =
        frac(cases.iter().filter(|c| c.path == PathTaken::ReducedAccepted).count());
    let gaps: Vec<f64> = cases.iter().filter_map(|c| c.suboptimality_gap).collect();
    let mean_suboptimality_gap =
        (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);

    Ok(BenchReport {
        n_cases,
        algorithms,
        stages,
        path_counts,
        reduced_accepted_fraction,
        speedup: if tpdg_mean > 0.0 { full_mean / tpdg_mean } else { f64::INFINITY },
        mean_suboptimality_gap,
        cases,
    })
}

impl BenchReport {
    /// Per-case CSV (one row per parameter vector).
    pub fn write_cases_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "index,full_status,full_cost,full_ms,full_t_f,path,tpdg_status,tpdg_cost,tpdg_ms,\
             tpdg_t_f,prediction_ms,reduced_solve_ms,feasibility_check_ms,fallback_ms,\
             suboptimality_gap"
        )?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
        for c in &self.cases {
            writeln!(
                out,
                "{},{},{},{:?},{:?},{},{},{},{:?},{:?},{},{},{},{},{}",
                c.index,
                c.full_status,
                opt(c.full_cost),
                c.full_ms,
                c.full_t_f,
                c.path,
                c.tpdg_status,
                opt(c.tpdg_cost),
                c.tpdg_ms,
                c.tpdg_t_f,
                opt(c.prediction_ms),
                opt(c.reduced_solve_ms),
                opt(c.feasibility_check_ms),
                opt(c.fallback_ms),
                opt(c.suboptimality_gap),
            )?;
        }
        Ok(())
    }

    /// Human-readable comparison table.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("paired benchmark over {} cases\n", self.n_cases));
        s.push_str("algorithm      feasible   mean ms      std ms\n");
        for row in &self.algorithms {
            s.push_str(&format!(
                "{:<14} {:>7.2}% {:>10.2} {:>11.2}\n",
                row.name,
                100.0 * row.feasible_fraction,
                row.mean_ms,
                row.std_ms
            ));
        }
        s.push_str(&format!(
            "speedup (mean full / mean online): {:.2}x\n",
            self.speedup
        ));
        s.push_str(&format!(
            "reduced-problem acceptance: {:.2}%\n",
            100.0 * self.reduced_accepted_fraction
        ));
        if let Some(gap) = self.mean_suboptimality_gap {
            s.push_str(&format!("mean suboptimality gap: {gap:.3e}\n"));
        }
        s.push_str("stage                count   mean ms      std ms\n");
        for st in &self.stages {
            s.push_str(&format!(
                "{:<20} {:>5} {:>10.3} {:>11.3}\n",
                st.stage, st.count, st.mean_ms, st.std_ms
            ));
        }
        for (path, count) in &self.path_counts {
            s.push_str(&format!("path {path}: {count}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lcvx::ConstraintFamily;
    use crate::problem::{make_theta, reference_theta};
    use crate::solver::extract_tight_constraints;
    use approx::assert_relative_eq;
    use std::sync::LazyLock;

    fn quick_search() -> LineSearchConfig {
        LineSearchConfig { t_lo: 20.0, t_hi: Some(100.0), coarse_grid: 9, refine_tol: 0.5 }
    }

    /// Shared reference full solve + its extracted oracle strategy.
    static REFERENCE: LazyLock<(SolveResult, Strategy)> = LazyLock::new(|| {
        let mission = MissionConfig::default();
        let theta = reference_theta();
        let full = full_solve(&mission, &theta, &quick_search()).unwrap();
        assert_eq!(full.status, SolveStatus::Optimal);
        let socp = build_socp(&mission, &theta, full.t_f).unwrap();
        let strategy =
            extract_tight_constraints(&socp, &full, crate::solver::DEFAULT_TIGHT_TOL).unwrap();
        (full, strategy)
    });

    #[test]
    fn oracle_strategy_is_accepted_without_fallback() {
        let mission = MissionConfig::default();
        let theta = reference_theta();
        let (full, strategy) = &*REFERENCE;
        let predictor = FixedStrategy(strategy.clone());
        let outcome = tpdg(&mission, &theta, &predictor, &quick_search()).unwrap();

        assert_eq!(outcome.path_taken, PathTaken::ReducedAccepted);
        assert_eq!(outcome.solution.status, SolveStatus::Optimal);
        assert_relative_eq!(outcome.solution.cost, full.cost, max_relative = 1e-4);
        assert!(outcome.feasibility.as_ref().unwrap().feasible);
        // stage bookkeeping: no fallback ran
        assert!(outcome.timings.prediction_ms.is_some());
        assert!(outcome.timings.reduced_solve_ms.is_some());
        assert!(outcome.timings.feasibility_check_ms.is_some());
        assert!(outcome.timings.full_solve_ms.is_none());
        assert!(outcome.total_ms() > 0.0);
        // accepted-path cost can only sit at or above the free-time optimum
        assert!(outcome.solution.cost >= full.cost - 1e-6 * full.cost.abs());
        // the outcome record is serializable and labeled
        let record = outcome.summary_json();
        assert_eq!(record["path_taken"], "reduced_accepted");
        assert_eq!(record["feasibility"]["feasible"], true);
        assert!(record["cost"].is_number());
    }

    #[test]
    fn empty_strategy_falls_back_and_recovers_the_optimum() {
        let mission = MissionConfig::default();
        let theta = reference_theta();
        let (full, strategy) = &*REFERENCE;
        // keep-nothing candidate: the relaxation is unbounded, so the
        // reduced stage cannot produce an optimum
        let predictor = FixedStrategy(Strategy::all_zeros(mission.n_nodes, strategy.t_f_star).unwrap());
        let outcome = tpdg(&mission, &theta, &predictor, &quick_search()).unwrap();

        assert_eq!(outcome.path_taken, PathTaken::FallbackAfterInfeasibleReduced);
        assert_eq!(outcome.solution.status, SolveStatus::Optimal);
        // the focused fallback grid finds the same optimum as the plain search
        assert_relative_eq!(outcome.solution.cost, full.cost, max_relative = 1e-9);
        assert_relative_eq!(outcome.solution.t_f, full.t_f, max_relative = 1e-9);
        assert!(outcome.feasibility.as_ref().unwrap().feasible);
        assert!(outcome.timings.feasibility_check_ms.is_none(), "no optimum to check");
        assert!(outcome.timings.full_solve_ms.is_some());
    }

    /// A pointing-limited scenario: approaching with a strong lateral
    /// velocity under a tight tilt bound makes the pointing constraint
    /// active at the optimum, so deleting its rows changes the solution.
    fn pointing_limited_theta() -> ProblemParameters {
        make_theta(
            10f64.to_radians(),
            80f64.to_radians(),
            25f64.to_radians(),
            [2000.0, 2000.0, 1500.0].into(),
            [-40.0, -40.0, -20.0].into(),
        )
        .unwrap()
    }

    #[test]
    fn violating_candidate_fails_the_check_then_falls_back() {
        let mission = MissionConfig::default();
        let theta = pointing_limited_theta();
        let full = full_solve(&mission, &theta, &quick_search()).unwrap();
        assert_eq!(full.status, SolveStatus::Optimal);
        let socp = build_socp(&mission, &theta, full.t_f).unwrap();
        let oracle =
            extract_tight_constraints(&socp, &full, crate::solver::DEFAULT_TIGHT_TOL).unwrap();
        let layout = crate::lcvx::ConstraintLayout::new(mission.n_nodes).unwrap();
        let pointing_tight = (0..oracle.tau.len())
            .filter(|&i| {
                oracle.tau[i] && layout.resolve(i).unwrap().0 == ConstraintFamily::Pointing
            })
            .count();
        assert!(pointing_tight > 0, "scenario must make the tilt bound active");

        // corrupt the oracle: drop every pointing flag
        let mut tau = oracle.tau.clone();
        for (i, flag) in tau.iter_mut().enumerate() {
            if layout.resolve(i).unwrap().0 == ConstraintFamily::Pointing {
                *flag = false;
            }
        }
        let corrupted = Strategy::new(tau, oracle.t_f_star).unwrap();
        let outcome =
            tpdg(&mission, &theta, &FixedStrategy(corrupted), &quick_search()).unwrap();

        assert_eq!(outcome.path_taken, PathTaken::FallbackAfterFailedFeasibilityCheck);
        assert_eq!(outcome.solution.status, SolveStatus::Optimal);
        assert_relative_eq!(outcome.solution.cost, full.cost, max_relative = 1e-9);
        assert!(outcome.feasibility.as_ref().unwrap().feasible);
        // all four stages ran
        assert!(outcome.timings.prediction_ms.is_some());
        assert!(outcome.timings.reduced_solve_ms.is_some());
        assert!(outcome.timings.feasibility_check_ms.is_some());
        assert!(outcome.timings.full_solve_ms.is_some());
    }

    #[test]
    fn infeasible_problem_reports_full_infeasible() {
        let mission = MissionConfig::default();
        // far outside the glideslope cone at near-ground altitude
        let theta = make_theta(
            10f64.to_radians(),
            45f64.to_radians(),
            80f64.to_radians(),
            [5000.0, 0.0, 10.0].into(),
            [-15.0, -15.0, -30.0].into(),
        )
        .unwrap();
        let predictor = FixedStrategy(Strategy::all_ones(mission.n_nodes, 50.0).unwrap());
        let outcome = tpdg(&mission, &theta, &predictor, &quick_search()).unwrap();
        assert_eq!(outcome.path_taken, PathTaken::FullInfeasible);
        assert_eq!(outcome.solution.status, SolveStatus::Infeasible);
        assert!(outcome.solution.trajectory.is_none());
        assert!(outcome.feasibility.is_none());
        assert!(outcome.timings.full_solve_ms.is_some());
        assert_eq!(outcome.summary_json()["cost"], serde_json::Value::Null);
    }

    #[test]
    fn closure_predictor_with_keep_everything_is_accepted() {
        let mission = MissionConfig::default();
        let theta = reference_theta();
        let predictor = |m: &MissionConfig, _: &ProblemParameters| Strategy::all_ones(m.n_nodes, 55.0);
        let outcome = tpdg(&mission, &theta, &predictor, &quick_search()).unwrap();
        // keeping every constraint at a feasible time reproduces the full
        // fixed-time problem, which is trivially self-feasible
        assert_eq!(outcome.path_taken, PathTaken::ReducedAccepted);
        assert_relative_eq!(outcome.solution.cost, 261.8256222359636, max_relative = 1e-6);
        assert_relative_eq!(outcome.solution.t_f, 55.0, max_relative = 1e-12);
    }

    #[test]
    fn bench_pairs_the_two_routes_and_aggregates() {
        let mission = MissionConfig::default();
        let thetas = vec![reference_theta()];
        let predictor =
            |m: &MissionConfig, _: &ProblemParameters| Strategy::all_ones(m.n_nodes, 55.0);
        let report = bench(&mission, &thetas, &predictor, &quick_search()).unwrap();

        assert_eq!(report.n_cases, 1);
        assert_eq!(report.cases.len(), 1);
        assert_eq!(report.algorithms.len(), 2);
        assert_eq!(report.algorithms[0].name, "full_lcvx");
        assert_eq!(report.algorithms[1].name, "tpdg");
        for row in &report.algorithms {
            assert_relative_eq!(row.feasible_fraction, 1.0, max_relative = 1e-12);
            assert!(row.mean_ms > 0.0);
            // single-case batch: no spread
            assert_eq!(row.std_ms, 0.0);
        }
        assert_relative_eq!(report.reduced_accepted_fraction, 1.0, max_relative = 1e-12);
        assert_eq!(report.path_counts["reduced_accepted"], 1);
        assert!(report.speedup > 0.0);
        // all-ones at a fixed suboptimal time costs at least the free optimum
        let gap = report.mean_suboptimality_gap.unwrap();
        assert!(gap >= -1e-9, "gap {gap}");
        let case = &report.cases[0];
        assert!(case.fallback_ms.is_none());
        assert_relative_eq!(
            case.tpdg_ms,
            case.prediction_ms.unwrap()
                + case.reduced_solve_ms.unwrap()
                + case.feasibility_check_ms.unwrap(),
            max_relative = 1e-9
        );

        // CSV + human summary render
        let mut csv = Vec::new();
        report.write_cases_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().starts_with("index,full_status"));
        let summary = report.summary_text();
        assert!(summary.contains("full_lcvx"));
        assert!(summary.contains("speedup"));
    }

    #[test]
    fn random_model_pair_still_yields_a_feasible_outcome() {
        use crate::lcvx::LAYOUT_VERSION;
        use crate::nn::{ModelWeights, PredictionTarget, Standardizer, TransformerConfig};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        let mission = MissionConfig::default();
        let theta = reference_theta();
        let make_bundle = |target: PredictionTarget, seed: u64| {
            let cfg = TransformerConfig {
                d_model: 8,
                n_heads: 2,
                n_layers: 1,
                d_ff: 16,
                dropout: 0.0,
                input_dim: 9,
                output_dim: target.output_dim(mission.n_nodes),
                single_token: false,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ModelBundle {
                config: cfg.clone(),
                target,
                layout_version: LAYOUT_VERSION,
                mission_hash: mission.hash(),
                n_nodes: mission.n_nodes,
                standardizer: Standardizer { mean: vec![0.0; 9], std: vec![1.0; 9] },
                weights: ModelWeights::init(&cfg, &mut rng),
            }
        };
        let cm = make_bundle(PredictionTarget::Constraints, 1);
        let tm = make_bundle(PredictionTarget::FinalTime, 2);
        let predictor = ModelPredictor {
            constraint_model: &cm,
            time_model: &tm,
            options: PredictOptions::default(),
        };
        let outcome = tpdg(&mission, &theta, &predictor, &quick_search()).unwrap();
        // untrained models mispredict, but the procedure must still land on
        // a verified-feasible solution for this feasible problem
        assert_eq!(outcome.solution.status, SolveStatus::Optimal);
        assert!(outcome.feasibility.as_ref().unwrap().feasible);
        assert_relative_eq!(
            outcome.total_ms(),
            outcome.timings.total_ms(),
            max_relative = 1e-12
        );
    }
}
