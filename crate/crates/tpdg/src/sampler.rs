//! Dataset generation: uniform parameter sampling around a seed case,
//! full-solve labeling, and CSV persistence.
//!
//! Each candidate index owns its own counter-derived RNG stream, so the
//! drawn parameters are identical regardless of worker count or scheduling;
//! the dataset is assembled as an ordered merge by sample index. Only
//! candidates whose full solve is optimal are stored, as
//! `(theta, tight flags, optimal flight time)` rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lcvx::layout::{ConstraintLayout, LAYOUT_VERSION};
use crate::lcvx::socp::build_socp;
use crate::problem::{make_theta, MissionConfig, ProblemParameters, THETA_FIELDS};
use crate::solver::{
    extract_tight_constraints, full_solve, LineSearchConfig, SolveStatus, DEFAULT_TIGHT_TOL,
};

/// How to draw parameter vectors around a seed case.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    /// Center of the sampled region.
    pub theta0: ProblemParameters,
    /// Half-width for the three angles, rad.
    pub radius_angle: f64,
    /// Half-width for each initial-position axis, m.
    pub radius_position: f64,
    /// Half-width for each initial-velocity axis, m/s.
    pub radius_velocity: f64,
    /// Candidates to draw (stored rows will be fewer: only feasible ones).
    pub count: usize,
    /// Base RNG seed; candidate `i` uses stream `i` of this seed.
    pub seed: u64,
    /// Draw each 3-vector group uniformly from a ball of the group radius
    /// instead of the default axis-aligned box.
    pub ball_mode: bool,
    /// When set, the vertical initial velocity is drawn uniformly from this
    /// absolute interval instead of the centered one. The replication
    /// preset uses it for its asymmetric vertical-velocity range.
    pub v0z_range: Option<(f64, f64)>,
}

impl SamplingSpec {
    /// Box sampling around `theta0` with the given group radii.
    pub fn new(
        theta0: ProblemParameters,
        radius_angle: f64,
        radius_position: f64,
        radius_velocity: f64,
        count: usize,
        seed: u64,
    ) -> Self {
        Self {
            theta0,
            radius_angle,
            radius_position,
            radius_velocity,
            count,
            seed,
            ball_mode: false,
            v0z_range: None,
        }
    }

    /// The benchmark preset: the reference landing case with half-widths of
    /// 10 degrees on angles, 500 m on position, and 100 m/s on velocity,
    /// except that the vertical velocity is drawn from the fixed interval
    /// [-101.7, 70] m/s (asymmetric about the seed value on purpose).
    pub fn benchmark_preset(count: usize, seed: u64) -> Self {
        Self {
            v0z_range: Some((-101.7, 70.0)),
            ..Self::new(
                crate::problem::reference_theta(),
                10.0_f64.to_radians(),
                500.0,
                100.0,
                count,
                seed,
            )
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (value, field) in [
            (self.radius_angle, "radius_angle"),
            (self.radius_position, "radius_position"),
            (self.radius_velocity, "radius_velocity"),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("radius must be finite and >= 0, got {value}"),
                });
            }
        }
        if self.count == 0 {
            return Err(Error::InvalidParameter {
                field: "count",
                reason: "must request at least one sample".into(),
            });
        }
        if let Some((lo, hi)) = self.v0z_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter {
                    field: "v0z_range",
                    reason: format!("need finite lo <= hi, got ({lo}, {hi})"),
                });
            }
        }
        Ok(())
    }
}

/// One stored labeling: parameters, tight flags, optimal flight time.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub theta: [f64; 9],
    pub tau: Vec<bool>,
    pub t_f: f64,
}

impl DatasetSample {
    pub fn params(&self) -> Result<ProblemParameters> {
        ProblemParameters::from_array(&self.theta)
    }

    pub fn strategy(&self) -> Result<crate::lcvx::Strategy> {
        crate::lcvx::Strategy::new(self.tau.clone(), self.t_f)
    }
}

/// A labeled dataset plus the provenance needed to validate reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout_version: u32,
    pub n_nodes: usize,
    pub mission_hash: String,
    pub radius_angle: f64,
    pub radius_position: f64,
    pub radius_velocity: f64,
    pub seed: u64,
    /// Candidates drawn, feasible or not.
    pub attempted: usize,
    pub samples: Vec<DatasetSample>,
}

impl Dataset {
    /// Stored / attempted.
    pub fn feasibility_yield(&self) -> f64 {
        self.samples.len() as f64 / self.attempted as f64
    }

    /// Width of each row's flag section.
    pub fn flag_width(&self) -> usize {
        8 * self.n_nodes - 3
    }

    /// Error unless the dataset was generated under `mission`.
    pub fn check_mission(&self, mission: &MissionConfig) -> Result<()> {
        let current = mission.hash();
        if self.mission_hash != current {
            return Err(Error::MissionHashMismatch(format!(
                "dataset was generated under mission {} but the current mission is {current}",
                self.mission_hash
            )));
        }
        if self.n_nodes != mission.n_nodes {
            return Err(Error::Dataset(format!(
                "dataset has {} nodes per trajectory, mission expects {}",
                self.n_nodes, mission.n_nodes
            )));
        }
        Ok(())
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Uniform draw from the closed ball of radius `r` (rejection from the cube).
fn ball_offset(rng: &mut ChaCha8Rng, r: f64) -> [f64; 3] {
    if r == 0.0 {
        return [0.0; 3];
    }
    loop {
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(-1.0..=1.0);
        let z = rng.random_range(-1.0..=1.0);
        if x * x + y * y + z * z <= 1.0 {
            return [x * r, y * r, z * r];
        }
    }
}

const ANGLE_EPS: f64 = 1e-9;

/// Draw one parameter vector around `spec.theta0`.
///
/// Angles and each position/velocity axis are uniform on the interval of
/// the group half-width around the seed value, pre-clipped to the parameter
/// domain (so degenerate radii reproduce the seed exactly). Ball mode draws
/// the 3-vector offsets from group-radius balls before the same clipping.
pub fn sample_theta(spec: &SamplingSpec, rng: &mut ChaCha8Rng) -> ProblemParameters {
    let c = spec.theta0.to_array();
    let half_pi = std::f64::consts::FRAC_PI_2;
    // domain boxes per component: angles, then r0, then v0
    let domain_lo = [
        0.0,
        ANGLE_EPS,
        ANGLE_EPS,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
        ANGLE_EPS,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    let domain_hi = [
        half_pi - ANGLE_EPS,
        half_pi,
        half_pi - ANGLE_EPS,
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
    ];

    let mut drawn = [0.0_f64; 9];
    if spec.ball_mode {
        // one ball draw per group, not per component
        let a = ball_offset(rng, spec.radius_angle);
        let p = ball_offset(rng, spec.radius_position);
        let v = ball_offset(rng, spec.radius_velocity);
        for i in 0..3 {
            drawn[i] = c[i] + a[i];
            drawn[3 + i] = c[3 + i] + p[i];
            drawn[6 + i] = c[6 + i] + v[i];
        }
    } else {
        for i in 0..9 {
            let r = match i {
                0..=2 => spec.radius_angle,
                3..=5 => spec.radius_position,
                _ => spec.radius_velocity,
            };
            let lo = (c[i] - r).max(domain_lo[i]);
            let hi = (c[i] + r).min(domain_hi[i]);
            drawn[i] = uniform_in(rng, lo, hi);
        }
    }
    if let Some((lo, hi)) = spec.v0z_range {
        drawn[8] = uniform_in(rng, lo, hi);
    }
    // ball mode (and the override) still need the domain clip
    for i in 0..9 {
        drawn[i] = drawn[i].clamp(domain_lo[i], domain_hi[i]);
    }
    make_theta(
        drawn[0],
        drawn[1],
        drawn[2],
        nalgebra::Vector3::new(drawn[3], drawn[4], drawn[5]),
        nalgebra::Vector3::new(drawn[6], drawn[7], drawn[8]),
    )
    .expect("clipped draws stay inside the parameter domain")
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draw `spec.count` candidates, label each with a full solve, and keep the
/// feasible ones. Deterministic for a given spec regardless of `workers`.
pub fn generate_dataset(
    mission: &MissionConfig,
    spec: &SamplingSpec,
    search: &LineSearchConfig,
    workers: usize,
) -> Result<Dataset> {
    mission.validate()?;
    spec.validate()?;
    if workers == 0 {
        return Err(Error::InvalidParameter {
            field: "workers",
            reason: "need at least one worker".into(),
        });
    }

    let label = |i: usize| -> Result<Option<DatasetSample>> {
        let mut rng = rng_for(spec.seed, i);
        let theta = sample_theta(spec, &mut rng);
        let result = full_solve(mission, &theta, search)?;
        if result.status != SolveStatus::Optimal {
            return Ok(None);
        }
        let socp = build_socp(mission, &theta, result.t_f)?;
        let strategy = extract_tight_constraints(&socp, &result, DEFAULT_TIGHT_TOL)?;
        Ok(Some(DatasetSample {
            theta: theta.to_array(),
            tau: strategy.tau,
            t_f: strategy.t_f_star,
        }))
    };

    let labeled: Vec<Option<DatasetSample>> = if workers == 1 {
        (0..spec.count).map(label).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| (0..spec.count).into_par_iter().map(label).collect::<Result<_>>())?
    };
    let samples: Vec<DatasetSample> = labeled.into_iter().flatten().collect();
    if samples.is_empty() {
        log::warn!(
            "no feasible candidates among {} draws; the dataset is empty",
            spec.count
        );
    }

    Ok(Dataset {
        layout_version: LAYOUT_VERSION,
        n_nodes: mission.n_nodes,
        mission_hash: mission.hash(),
        radius_angle: spec.radius_angle,
        radius_position: spec.radius_position,
        radius_velocity: spec.radius_velocity,
        seed: spec.seed,
        attempted: spec.count,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Write as CSV with `# key=value` header comments.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "# layout_version={}", dataset.layout_version)?;
    writeln!(out, "# n_nodes={}", dataset.n_nodes)?;
    writeln!(out, "# mission_hash={}", dataset.mission_hash)?;
    writeln!(out, "# radius_angle={:?}", dataset.radius_angle)?;
    writeln!(out, "# radius_position={:?}", dataset.radius_position)?;
    writeln!(out, "# radius_velocity={:?}", dataset.radius_velocity)?;
    writeln!(out, "# seed={}", dataset.seed)?;
    writeln!(out, "# attempted={}", dataset.attempted)?;
    writeln!(out, "# stored={}", dataset.samples.len())?;
    writeln!(out, "# yield={:?}", dataset.feasibility_yield())?;
    let mut header: Vec<String> = THETA_FIELDS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dataset.flag_width()).map(|i| format!("tau_{i}")));
    header.push("t_f".into());
    writeln!(out, "{}", header.join(","))?;
    for sample in &dataset.samples {
        let mut row = String::new();
        for v in sample.theta {
            row.push_str(&format!("{v:?},"));
        }
        for &flag in &sample.tau {
            row.push(if flag { '1' } else { '0' });
            row.push(',');
        }
        row.push_str(&format!("{:?}", sample.t_f));
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    write_dataset(dataset, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Read a dataset, validating the layout version and row geometry.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut header: std::collections::HashMap<String, String> = Default::default();
    let mut column_line: Option<String> = None;
    let mut samples = Vec::new();
    let mut n_flags = 0usize;

    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once('=').ok_or_else(|| {
                Error::Dataset(format!("malformed header line: {line:?}"))
            })?;
            header.insert(key.trim().to_string(), value.trim().to_string());
            continue;
        }
        if column_line.is_none() {
            // first non-comment line is the column header; fix geometry now
            let version: u32 = header
                .get("layout_version")
                .ok_or_else(|| Error::Dataset("missing layout_version header".into()))?
                .parse()
                .map_err(|e| Error::Dataset(format!("bad layout_version: {e}")))?;
            if version != LAYOUT_VERSION {
                return Err(Error::LayoutVersion { found: version, expected: LAYOUT_VERSION });
            }
            let n_nodes: usize = header
                .get("n_nodes")
                .ok_or_else(|| Error::Dataset("missing n_nodes header".into()))?
                .parse()
                .map_err(|e| Error::Dataset(format!("bad n_nodes: {e}")))?;
            n_flags = ConstraintLayout::new(n_nodes)?.flag_count();
            let expected_cols = 9 + n_flags + 1;
            let got = line.split(',').count();
            if got != expected_cols {
                return Err(Error::Dataset(format!(
                    "expected {expected_cols} columns for {n_nodes} nodes, found {got}"
                )));
            }
            column_line = Some(line);
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 + n_flags + 1 {
            return Err(Error::Dataset(format!(
                "row {} has {} fields, expected {}",
                samples.len(),
                fields.len(),
                9 + n_flags + 1
            )));
        }
        let mut theta = [0.0; 9];
        for (slot, field) in theta.iter_mut().zip(&fields[..9]) {
            *slot = field
                .parse()
                .map_err(|e| Error::Dataset(format!("bad parameter value {field:?}: {e}")))?;
        }
        let mut tau = Vec::with_capacity(n_flags);
        for field in &fields[9..9 + n_flags] {
            tau.push(match *field {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Dataset(format!("flag must be 0 or 1, got {other:?}")))
                }
            });
        }
        let t_f = fields[9 + n_flags]
            .parse()
            .map_err(|e| Error::Dataset(format!("bad flight time: {e}")))?;
        samples.push(DatasetSample { theta, tau, t_f });
    }
    if column_line.is_none() {
        return Err(Error::Dataset("file has no column header".into()));
    }

    let get = |key: &str| -> Result<&String> {
        header
            .get(key)
            .ok_or_else(|| Error::Dataset(format!("missing {key} header")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|e| Error::Dataset(format!("bad {key}: {e}")))
    };
    let stored: usize = get("stored")?
        .parse()
        .map_err(|e| Error::Dataset(format!("bad stored: {e}")))?;
    if stored != samples.len() {
        return Err(Error::Dataset(format!(
            "header claims {stored} rows, file has {}",
            samples.len()
        )));
    }
    Ok(Dataset {
        layout_version: get("layout_version")?
            .parse()
            .map_err(|e| Error::Dataset(format!("bad layout_version: {e}")))?,
        n_nodes: get("n_nodes")?
            .parse()
            .map_err(|e| Error::Dataset(format!("bad n_nodes: {e}")))?,
        mission_hash: get("mission_hash")?.clone(),
        radius_angle: parse_f64("radius_angle")?,
        radius_position: parse_f64("radius_position")?,
        radius_velocity: parse_f64("radius_velocity")?,
        seed: get("seed")?
            .parse()
            .map_err(|e| Error::Dataset(format!("bad seed: {e}")))?,
        attempted: get("attempted")?
            .parse()
            .map_err(|e| Error::Dataset(format!("bad attempted: {e}")))?,
        samples,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
