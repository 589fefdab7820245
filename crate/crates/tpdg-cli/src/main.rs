//! Command-line front end for the powered-descent guidance pipeline.
//!
//! Subcommands cover the whole workflow:
//!
//! - `sample` — generate a labeled dataset of descent problems and their
//!   optimal strategies.
//! - `train` — fit the tight-constraint or flight-time predictor on a
//!   dataset.
//! - `solve` — run the offline optimizer (free final time, or fixed with
//!   `--fixed-t`) on one problem instance.
//! - `tpdg` — run the online predict → reduce → verify loop, falling back
//!   to the full solve when the reduced problem fails.
//! - `bench` — paired comparison of the full solver and the online loop on
//!   a common case list.
//! - `export-embeddings` — dump pooled encoder activations for external
//!   projection tools.
//!
//! Angles are degrees on every flag and radians internally. Exit codes:
//! 0 on success, 2 when the requested problem is infeasible, 1 on any other
//! failure (bad flags, missing files, solver breakdown). Every command is
//! deterministic under fixed seeds and emits a machine-readable run record
//! carrying the mission-config hash, so artifacts from different
//! configurations cannot be mixed silently.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde_json::{json, Value};

use tpdg::lcvx::{build_socp, ConstraintLayout, LAYOUT_VERSION};
use tpdg::nn::{
    export_embeddings, train, LrSchedule, ModelBundle, PredictOptions, PredictionTarget,
    TrainConfig, TransformerConfig,
};
use tpdg::problem::{make_theta, MissionConfig, ProblemParameters, THETA_FIELDS};
use tpdg::runtime::{bench, tpdg as run_online, ModelPredictor, PathTaken};
use tpdg::sampler::{generate_dataset, load_dataset, save_dataset, SamplingSpec};
use tpdg::solver::{full_solve, solve_conic, LineSearchConfig, SolveResult, SolveStatus};

const VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Argument structure
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "tpdg",
    version,
    about = "Fuel-optimal powered-descent guidance with learned constraint screening",
    after_help = "Exit codes: 0 success, 2 problem infeasible, 1 any other error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset of feasible descent problems.
    Sample(SampleCmd),
    /// Fit a predictor (tight constraints or flight time) on a dataset.
    Train(TrainCmd),
    /// Solve one descent problem with the offline optimizer.
    Solve(SolveCmd),
    /// Solve one descent problem with the online predict-reduce-verify loop.
    Tpdg(TpdgCmd),
    /// Paired timing comparison: full solver vs. the online loop.
    Bench(BenchCmd),
    /// Export pooled encoder activations per dataset row as CSV.
    ExportEmbeddings(ExportCmd),
}

#[derive(Args)]
struct MissionArg {
    /// Mission configuration file (`key = value` sections); defaults to the
    /// built-in Mars landing mission.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

impl MissionArg {
    fn load(&self) -> Result<MissionConfig> {
        match &self.config {
            Some(path) => MissionConfig::load(path)
                .with_context(|| format!("loading mission config {}", path.display())),
            None => Ok(MissionConfig::default()),
        }
    }
}

/// One problem instance, angles in degrees. Defaults are the reference
/// landing case used throughout the documentation.
#[derive(Args)]
struct ThetaArgs {
    /// Engine cant angle from the thrust axis, degrees.
    #[arg(long, default_value_t = 10.0)]
    phi: f64,
    /// Glideslope cone half-angle from vertical, degrees.
    #[arg(long, default_value_t = 80.0)]
    glideslope: f64,
    /// Thrust pointing half-angle from vertical, degrees.
    #[arg(long, default_value_t = 60.0)]
    pointing: f64,
    /// Initial position "x,y,z" in metres (z up, landing site at origin).
    #[arg(long, value_name = "X,Y,Z", default_value = "2000,2000,1000")]
    r0: String,
    /// Initial velocity "x,y,z" in m/s.
    #[arg(long, value_name = "X,Y,Z", default_value = "-15,-15,-30")]
    v0: String,
}

impl ThetaArgs {
    fn theta(&self) -> Result<ProblemParameters> {
        let params = make_theta(
            self.phi.to_radians(),
            self.glideslope.to_radians(),
            self.pointing.to_radians(),
            parse_vec3(&self.r0).context("--r0")?,
            parse_vec3(&self.v0).context("--v0")?,
        )?;
        Ok(params)
    }
}

/// Flight-time line-search window and resolution.
#[derive(Args)]
struct SearchArgs {
    /// Shortest flight time to consider, seconds.
    #[arg(long, default_value_t = 5.0)]
    t_lo: f64,
    /// Longest flight time to consider, seconds; defaults to the
    /// fuel-depletion bound.
    #[arg(long)]
    t_hi: Option<f64>,
    /// Coarse grid points across the flight-time window.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Stop refining once the bracket is this narrow, seconds.
    #[arg(long, default_value_t = 0.1)]
    refine: f64,
}

impl SearchArgs {
    fn line_search(&self) -> LineSearchConfig {
        LineSearchConfig {
            t_lo: self.t_lo,
            t_hi: self.t_hi,
            coarse_grid: self.grid,
            refine_tol: self.refine,
        }
    }

    fn to_json(&self) -> Value {
        json!({"t_lo": self.t_lo, "t_hi": self.t_hi, "grid": self.grid, "refine": self.refine})
    }
}

/// Prediction knobs shared by `tpdg` and `bench`.
#[derive(Args)]
struct PredictArgs {
    /// Trained tight-constraint model file.
    #[arg(long, value_name = "PATH")]
    constraint_model: PathBuf,
    /// Trained flight-time model file.
    #[arg(long, value_name = "PATH")]
    time_model: PathBuf,
    /// Threshold at or above which a flag output counts as tight. Lower it
    /// to retain more constraints (fewer fallbacks, slower reduced solves).
    #[arg(long, default_value_t = 0.5)]
    tau_on: f64,
    /// Relative safety margin on the predicted flight time (0.05 = +5%).
    #[arg(long, default_value_t = 0.0)]
    time_margin: f64,
}

impl PredictArgs {
    fn load_models(&self) -> Result<(ModelBundle, ModelBundle)> {
        let constraint = ModelBundle::load(&self.constraint_model).with_context(|| {
            format!("loading constraint model {}", self.constraint_model.display())
        })?;
        let time = ModelBundle::load(&self.time_model)
            .with_context(|| format!("loading time model {}", self.time_model.display()))?;
        Ok((constraint, time))
    }

    fn options(&self, search: &SearchArgs) -> PredictOptions {
        PredictOptions {
            tau_on: self.tau_on,
            time_margin: self.time_margin,
            t_lo: search.t_lo,
            t_hi: search.t_hi,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "constraint_model": self.constraint_model.display().to_string(),
            "time_model": self.time_model.display().to_string(),
            "tau_on": self.tau_on,
            "time_margin": self.time_margin,
        })
    }
}

#[derive(Args)]
struct SampleCmd {
    #[command(flatten)]
    mission: MissionArg,
    /// Candidate parameter vectors to draw; only feasible ones are stored.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Base RNG seed; candidate i uses stream i, so runs are reproducible.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Labeling workers; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    center: ThetaArgs,
    /// Half-width around the center angles, degrees.
    #[arg(long, default_value_t = 10.0)]
    radius_angle: f64,
    /// Half-width around each initial-position axis, metres.
    #[arg(long, default_value_t = 500.0)]
    radius_position: f64,
    /// Half-width around each initial-velocity axis, m/s.
    #[arg(long, default_value_t = 100.0)]
    radius_velocity: f64,
    /// Draw each 3-vector group from a ball instead of a box.
    #[arg(long)]
    ball: bool,
    /// Absolute range "LO,HI" for the vertical initial velocity, m/s
    /// (overrides the centered range for that one component).
    #[arg(long, value_name = "LO,HI")]
    v0z_range: Option<String>,
    /// Use the standard wide benchmark ranges around the reference landing
    /// case instead of the center/radius flags.
    #[arg(
        long,
        conflicts_with_all = [
            "phi", "glideslope", "pointing", "r0", "v0",
            "radius_angle", "radius_position", "radius_velocity", "ball", "v0z_range",
        ]
    )]
    benchmark_preset: bool,
    #[command(flatten)]
    search: SearchArgs,
    /// Dataset output path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write the flag-index ↔ constraint map as CSV.
    #[arg(long, value_name = "PATH")]
    layout_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    /// Predict which of the 8N−3 constraint flags are tight.
    Constraints,
    /// Predict the optimal flight time.
    Time,
}

impl TargetArg {
    fn to_target(self) -> PredictionTarget {
        match self {
            TargetArg::Constraints => PredictionTarget::Constraints,
            TargetArg::Time => PredictionTarget::FinalTime,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TargetArg::Constraints => "constraints",
            TargetArg::Time => "time",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    /// Constant learning rate.
    Constant,
    /// Linear warmup then inverse-square-root decay.
    Warmup,
}

impl ScheduleArg {
    fn to_schedule(self) -> LrSchedule {
        match self {
            ScheduleArg::Constant => LrSchedule::Constant,
            ScheduleArg::Warmup => LrSchedule::WarmupInvSqrt,
        }
    }
}

#[derive(Args)]
struct TrainCmd {
    /// Dataset produced by `sample`.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Which predictor to fit.
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Model output path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Per-epoch metrics CSV (default: `<out>.log.csv`).
    #[arg(long, value_name = "PATH")]
    log_csv: Option<PathBuf>,
    /// Model width (default: 384 for constraints, 64 for time).
    #[arg(long)]
    d_model: Option<usize>,
    /// Attention heads (default: 2 for constraints, 1 for time).
    #[arg(long)]
    heads: Option<usize>,
    /// Encoder blocks (default: 4 for constraints, 2 for time).
    #[arg(long)]
    layers: Option<usize>,
    /// Feedforward width (default: 4 × d_model).
    #[arg(long)]
    d_ff: Option<usize>,
    /// Dropout probability during training (default: 0.1).
    #[arg(long)]
    dropout: Option<f64>,
    /// Feed the nine parameters as one token instead of nine (ablation).
    #[arg(long)]
    single_token: bool,
    /// Mini-batch size (default: 128 for constraints, 320 for time).
    #[arg(long)]
    batch: Option<usize>,
    /// Base learning rate (default: 1e-3 constant for constraints,
    /// 1e-2 with warmup for time).
    #[arg(long)]
    base_lr: Option<f64>,
    /// Learning-rate schedule (default: constant for constraints, warmup
    /// for time).
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    /// Warmup steps for the warmup schedule.
    #[arg(long, default_value_t = 4000)]
    warmup: usize,
    /// Cross-validation folds over the training split.
    #[arg(long, default_value_t = 2)]
    folds: usize,
    /// Passes over the training subset, per fold and for the refit.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Seed for the split, shuffles, weight init, and dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of the dataset held out as the final test set.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Args)]
struct SolveCmd {
    #[command(flatten)]
    mission: MissionArg,
    #[command(flatten)]
    theta: ThetaArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Solve at this fixed flight time (seconds) instead of searching.
    #[arg(long, value_name = "SECONDS")]
    fixed_t: Option<f64>,
    /// Write the solution trajectory as node-indexed CSV.
    #[arg(long, value_name = "PATH")]
    out_traj: Option<PathBuf>,
    /// Also write the summary JSON printed on stdout to this file.
    #[arg(long, value_name = "PATH")]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct TpdgCmd {
    #[command(flatten)]
    mission: MissionArg,
    #[command(flatten)]
    theta: ThetaArgs,
    #[command(flatten)]
    predict: PredictArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Write the solution trajectory as node-indexed CSV.
    #[arg(long, value_name = "PATH")]
    out_traj: Option<PathBuf>,
    /// Also write the outcome JSON printed on stdout to this file.
    #[arg(long, value_name = "PATH")]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct BenchCmd {
    #[command(flatten)]
    mission: MissionArg,
    /// Dataset whose rows supply the benchmark cases.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    #[command(flatten)]
    predict: PredictArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Run only the first N dataset rows.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    /// Write one CSV row per case.
    #[arg(long, value_name = "PATH")]
    out_cases: Option<PathBuf>,
    /// Write the aggregate report as JSON.
    #[arg(long, value_name = "PATH")]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct ExportCmd {
    /// Trained model file whose encoder produces the embeddings.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Dataset whose rows are embedded.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Output CSV path (`id,e_0..e_{d-1},label`).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Entry point and dispatch
// ---------------------------------------------------------------------------

/// Whether a command that ran to completion found its problem solvable.
enum CmdOutcome {
    Success,
    Infeasible,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // usage error. Exit code 2 stays reserved for infeasibility.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(CmdOutcome::Success) => ExitCode::SUCCESS,
        Ok(CmdOutcome::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<CmdOutcome> {
    match cli.command {
        Command::Sample(cmd) => run_sample(cmd),
        Command::Train(cmd) => run_train(cmd),
        Command::Solve(cmd) => run_solve(cmd),
        Command::Tpdg(cmd) => run_tpdg(cmd),
        Command::Bench(cmd) => run_bench(cmd),
        Command::ExportEmbeddings(cmd) => run_export(cmd),
    }
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

fn run_sample(cmd: SampleCmd) -> Result<CmdOutcome> {
    let mission = cmd.mission.load()?;
    let spec = if cmd.benchmark_preset {
        SamplingSpec::benchmark_preset(cmd.count, cmd.seed)
    } else {
        let mut spec = SamplingSpec::new(
            cmd.center.theta().context("sampling center")?,
            cmd.radius_angle.to_radians(),
            cmd.radius_position,
            cmd.radius_velocity,
            cmd.count,
            cmd.seed,
        );
        spec.ball_mode = cmd.ball;
        if let Some(range) = &cmd.v0z_range {
            spec.v0z_range = Some(parse_pair(range).context("--v0z-range")?);
        }
        spec
    };
    let search = cmd.search.line_search();
    let workers = cmd.workers.unwrap_or_else(default_workers);

    let dataset = generate_dataset(&mission, &spec, &search, workers)?;
    save_dataset(&dataset, &cmd.out)
        .with_context(|| format!("writing dataset {}", cmd.out.display()))?;
    if let Some(path) = &cmd.layout_out {
        fs::write(path, ConstraintLayout::new(mission.n_nodes)?.to_csv())
            .with_context(|| format!("writing layout map {}", path.display()))?;
    }

    let manifest = write_manifest(
        &cmd.out,
        &json!({
            "command": "sample",
            "version": VERSION,
            "mission_hash": mission.hash(),
            "layout_version": LAYOUT_VERSION,
            "seed": cmd.seed,
            "count": cmd.count,
            "workers": workers,
            "benchmark_preset": cmd.benchmark_preset,
            "spec": {
                "theta0": theta_json(&spec.theta0),
                "radius_angle_rad": spec.radius_angle,
                "radius_position_m": spec.radius_position,
                "radius_velocity_mps": spec.radius_velocity,
                "ball": spec.ball_mode,
                "v0z_range": spec.v0z_range,
            },
            "line_search": cmd.search.to_json(),
            "rows": dataset.samples.len(),
            "attempted": dataset.attempted,
        }),
    )?;

    println!(
        "{:#}",
        json!({
            "command": "sample",
            "rows": dataset.samples.len(),
            "attempted": dataset.attempted,
            "yield": dataset.feasibility_yield(),
            "mission_hash": mission.hash(),
            "out": cmd.out.display().to_string(),
            "manifest": manifest.display().to_string(),
        })
    );
    Ok(CmdOutcome::Success)
}

fn run_train(cmd: TrainCmd) -> Result<CmdOutcome> {
    let dataset = load_dataset(&cmd.dataset)
        .with_context(|| format!("loading dataset {}", cmd.dataset.display()))?;
    let target = cmd.target.to_target();

    // Published architecture defaults per target; every knob can be
    // overridden for desk-scale runs.
    let (d_model, heads, layers, batch, base_lr, schedule) = match cmd.target {
        TargetArg::Constraints => (384, 2, 4, 128, 1e-3, ScheduleArg::Constant),
        TargetArg::Time => (64, 1, 2, 320, 1e-2, ScheduleArg::Warmup),
    };
    let d_model = cmd.d_model.unwrap_or(d_model);
    let model_cfg = TransformerConfig {
        d_model,
        n_heads: cmd.heads.unwrap_or(heads),
        n_layers: cmd.layers.unwrap_or(layers),
        d_ff: cmd.d_ff.unwrap_or(4 * d_model),
        dropout: cmd.dropout.unwrap_or(0.1),
        input_dim: 9,
        output_dim: target.output_dim(dataset.n_nodes),
        single_token: cmd.single_token,
    };
    let train_cfg = TrainConfig {
        batch_size: cmd.batch.unwrap_or(batch),
        base_lr: cmd.base_lr.unwrap_or(base_lr),
        schedule: cmd.schedule.unwrap_or(schedule).to_schedule(),
        warmup_steps: cmd.warmup,
        k_folds: cmd.folds,
        epochs: cmd.epochs,
        seed: cmd.seed,
        test_fraction: cmd.test_fraction,
    };

    let trained = train(&dataset, target, &model_cfg, &train_cfg)?;
    trained
        .bundle
        .save(&cmd.out)
        .with_context(|| format!("writing model {}", cmd.out.display()))?;
    let log_path = cmd.log_csv.clone().unwrap_or_else(|| sidecar(&cmd.out, ".log.csv"));
    let mut log_file = fs::File::create(&log_path)
        .with_context(|| format!("creating training log {}", log_path.display()))?;
    trained.report.write_log_csv(&mut log_file)?;

    let manifest = write_manifest(
        &cmd.out,
        &json!({
            "command": "train",
            "version": VERSION,
            "mission_hash": dataset.mission_hash,
            "layout_version": dataset.layout_version,
            "dataset": cmd.dataset.display().to_string(),
            "rows": dataset.samples.len(),
            "target": cmd.target.name(),
            "seed": cmd.seed,
            "model": serde_json::to_value(&model_cfg)?,
            "training": serde_json::to_value(&train_cfg)?,
            "log_csv": log_path.display().to_string(),
        }),
    )?;

    let report = &trained.report;
    println!(
        "{:#}",
        json!({
            "command": "train",
            "target": cmd.target.name(),
            "rows": dataset.samples.len(),
            "param_count": report.param_count,
            "folds": report.folds.iter()
                .map(|f| json!({"fold": f.fold, "train_mse": f.train_mse, "val_mse": f.val_mse}))
                .collect::<Vec<_>>(),
            "test_rows": report.test_indices.len(),
            "test_mse": report.test_mse,
            "test_binary_accuracy": report.test_binary_accuracy,
            "mission_hash": dataset.mission_hash,
            "out": cmd.out.display().to_string(),
            "log_csv": log_path.display().to_string(),
            "manifest": manifest.display().to_string(),
        })
    );
    Ok(CmdOutcome::Success)
}

fn run_solve(cmd: SolveCmd) -> Result<CmdOutcome> {
    let mission = cmd.mission.load()?;
    let theta = cmd.theta.theta()?;
    let result = match cmd.fixed_t {
        Some(t) => {
            if !(t.is_finite() && t > 0.0) {
                bail!("--fixed-t must be a positive flight time, got {t}");
            }
            fixed_time_solve(&mission, &theta, t)?
        }
        None => full_solve(&mission, &theta, &cmd.search.line_search())?,
    };

    if let Some(path) = &cmd.out_traj {
        write_trajectory(path, &result)?;
    }
    let envelope = json!({
        "command": "solve",
        "version": VERSION,
        "mission_hash": mission.hash(),
        "layout_version": LAYOUT_VERSION,
        "theta": theta_json(&theta),
        "settings": {
            "line_search": cmd.search.to_json(),
            "fixed_t": cmd.fixed_t,
        },
        "result": serde_json::from_str::<Value>(&result.summary_json())?,
    });
    println!("{envelope:#}");
    if let Some(path) = &cmd.out_summary {
        fs::write(path, format!("{envelope:#}\n"))
            .with_context(|| format!("writing summary {}", path.display()))?;
    }

    match result.status {
        SolveStatus::Optimal => Ok(CmdOutcome::Success),
        SolveStatus::Infeasible => Ok(CmdOutcome::Infeasible),
        SolveStatus::NumericalFailure => {
            bail!("the conic solver failed numerically: {}", result.solver_detail)
        }
    }
}

fn run_tpdg(cmd: TpdgCmd) -> Result<CmdOutcome> {
    let mission = cmd.mission.load()?;
    let theta = cmd.theta.theta()?;
    let (constraint_model, time_model) = cmd.predict.load_models()?;
    let predictor = ModelPredictor {
        constraint_model: &constraint_model,
        time_model: &time_model,
        options: cmd.predict.options(&cmd.search),
    };

    let outcome = run_online(&mission, &theta, &predictor, &cmd.search.line_search())?;

    if let Some(path) = &cmd.out_traj {
        write_trajectory(path, &outcome.solution)?;
    }
    let envelope = json!({
        "command": "tpdg",
        "version": VERSION,
        "mission_hash": mission.hash(),
        "layout_version": LAYOUT_VERSION,
        "theta": theta_json(&theta),
        "settings": {
            "predict": cmd.predict.to_json(),
            "line_search": cmd.search.to_json(),
        },
        "outcome": outcome.summary_json(),
    });
    println!("{envelope:#}");
    if let Some(path) = &cmd.out_summary {
        fs::write(path, format!("{envelope:#}\n"))
            .with_context(|| format!("writing summary {}", path.display()))?;
    }

    match outcome.path_taken {
        PathTaken::FullInfeasible => Ok(CmdOutcome::Infeasible),
        _ => Ok(CmdOutcome::Success),
    }
}

fn run_bench(cmd: BenchCmd) -> Result<CmdOutcome> {
    let mission = cmd.mission.load()?;
    let dataset = load_dataset(&cmd.dataset)
        .with_context(|| format!("loading dataset {}", cmd.dataset.display()))?;
    dataset.check_mission(&mission)?;
    let (constraint_model, time_model) = cmd.predict.load_models()?;

    let limit = cmd.limit.unwrap_or(dataset.samples.len());
    let mut thetas = Vec::with_capacity(limit.min(dataset.samples.len()));
    for (i, sample) in dataset.samples.iter().take(limit).enumerate() {
        thetas.push(sample.params().with_context(|| format!("dataset row {i}"))?);
    }
    if thetas.is_empty() {
        bail!(
            "no cases to run ({} dataset rows, --limit {:?})",
            dataset.samples.len(),
            cmd.limit
        );
    }

    let predictor = ModelPredictor {
        constraint_model: &constraint_model,
        time_model: &time_model,
        options: cmd.predict.options(&cmd.search),
    };
    // Cases run one at a time on purpose: paired wall-clock timing is the
    // product here, and concurrent solves would contend for the same cores.
    let report = bench(&mission, &thetas, &predictor, &cmd.search.line_search())?;

    print!("{}", report.summary_text());
    if let Some(path) = &cmd.out_cases {
        let mut file = fs::File::create(path)
            .with_context(|| format!("creating case CSV {}", path.display()))?;
        report.write_cases_csv(&mut file)?;
    }
    if let Some(path) = &cmd.out_report {
        let body = json!({
            "command": "bench",
            "version": VERSION,
            "mission_hash": mission.hash(),
            "report": serde_json::to_value(&report)?,
        });
        fs::write(path, format!("{body:#}\n"))
            .with_context(|| format!("writing report {}", path.display()))?;
    }

    let manifest = json!({
        "command": "bench",
        "version": VERSION,
        "mission_hash": mission.hash(),
        "layout_version": dataset.layout_version,
        "dataset": cmd.dataset.display().to_string(),
        "cases": thetas.len(),
        "predict": cmd.predict.to_json(),
        "line_search": cmd.search.to_json(),
        "reduced_accepted_fraction": report.reduced_accepted_fraction,
        "speedup": report.speedup,
    });
    match cmd.out_report.as_ref().or(cmd.out_cases.as_ref()) {
        Some(anchor) => {
            write_manifest(anchor, &manifest)?;
        }
        // No output files requested: stdout is the only record, so append
        // the machine-readable block after the human-readable table.
        None => println!("\n{manifest:#}"),
    }
    Ok(CmdOutcome::Success)
}

fn run_export(cmd: ExportCmd) -> Result<CmdOutcome> {
    let model = ModelBundle::load(&cmd.model)
        .with_context(|| format!("loading model {}", cmd.model.display()))?;
    let dataset = load_dataset(&cmd.dataset)
        .with_context(|| format!("loading dataset {}", cmd.dataset.display()))?;
    let file = fs::File::create(&cmd.out)
        .with_context(|| format!("creating embedding CSV {}", cmd.out.display()))?;
    let mut out = std::io::BufWriter::new(file);
    export_embeddings(&model, &dataset, &mut out)?;
    out.flush()?;

    let manifest = write_manifest(
        &cmd.out,
        &json!({
            "command": "export-embeddings",
            "version": VERSION,
            "mission_hash": model.mission_hash,
            "layout_version": model.layout_version,
            "model": cmd.model.display().to_string(),
            "dataset": cmd.dataset.display().to_string(),
            "rows": dataset.samples.len(),
        }),
    )?;
    println!(
        "{:#}",
        json!({
            "command": "export-embeddings",
            "rows": dataset.samples.len(),
            "mission_hash": model.mission_hash,
            "out": cmd.out.display().to_string(),
            "manifest": manifest.display().to_string(),
        })
    );
    Ok(CmdOutcome::Success)
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Solve one problem at a fixed flight time. A time beyond the
/// fuel-exhaustion horizon is an infeasible problem, not a usage error.
fn fixed_time_solve(
    mission: &MissionConfig,
    theta: &ProblemParameters,
    t: f64,
) -> Result<SolveResult> {
    match build_socp(mission, theta, t) {
        Ok(socp) => Ok(solve_conic(&socp)?),
        Err(tpdg::Error::FuelExhausted { t, max }) => Ok(SolveResult {
            status: SolveStatus::Infeasible,
            cost: f64::INFINITY,
            t_f: t,
            wall_time_ms: 0.0,
            iterations: 0,
            solver_detail: format!(
                "flight time {t:.3} s exceeds the fuel-exhaustion horizon {max:.3} s"
            ),
            trajectory: None,
            line_search: None,
        }),
        Err(e) => Err(e.into()),
    }
}

fn write_trajectory(path: &Path, result: &SolveResult) -> Result<()> {
    match &result.trajectory {
        Some(traj) => fs::write(path, traj.to_csv())
            .with_context(|| format!("writing trajectory {}", path.display())),
        None => {
            eprintln!(
                "note: skipping {} — the {} result has no trajectory",
                path.display(),
                result.status
            );
            Ok(())
        }
    }
}

/// Canonical nine-scalar form as a JSON object (angles in radians).
fn theta_json(theta: &ProblemParameters) -> Value {
    let mut map = serde_json::Map::new();
    for (name, value) in THETA_FIELDS.iter().zip(theta.to_array()) {
        map.insert((*name).to_string(), json!(value));
    }
    Value::Object(map)
}

fn parse_vec3(value: &str) -> Result<Vector3<f64>> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("`{value}` is not a comma-separated 3-vector");
    }
    let mut out = [0.0_f64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.parse().with_context(|| format!("`{part}` is not a number"))?;
    }
    Ok(Vector3::new(out[0], out[1], out[2]))
}

fn parse_pair(value: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("`{value}` is not a comma-separated pair");
    }
    let lo: f64 = parts[0].parse().with_context(|| format!("`{}` is not a number", parts[0]))?;
    let hi: f64 = parts[1].parse().with_context(|| format!("`{}` is not a number", parts[1]))?;
    Ok((lo, hi))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// `<path>` with `suffix` appended to the file name.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Write `<anchor>.manifest.json` next to an output file and return its path.
fn write_manifest(anchor: &Path, manifest: &Value) -> Result<PathBuf> {
    let path = sidecar(anchor, ".manifest.json");
    fs::write(&path, format!("{manifest:#}\n"))
        .with_context(|| format!("writing run manifest {}", path.display()))?;
    Ok(path)
}
