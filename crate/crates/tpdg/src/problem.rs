//! Domain types for the parametric fuel-optimal powered-descent problem:
//! planet and vehicle configuration, the 9-scalar parameter vector that
//! drives the problem family, and validation of the convexification
//! global-optimality assumptions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

/// Planetary environment expressed in the landing frame (east-north-up,
/// origin at the landing site).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanetConfig {
    pub gravity: Vector3<f64>,  // m/s^2, typically (0, 0, -g)
    pub sidereal_period: f64,   // s, one full planet rotation
    pub latitude: f64,          // rad, landing-site latitude
    pub g_e: f64,               // m/s^2, Earth standard gravity (Isp conversions)
    /// Explicit planet-rotation override; `None` derives it from
    /// `sidereal_period` and `latitude` via [`omega_vector`].
    pub omega_override: Option<Vector3<f64>>,
}

impl Default for PlanetConfig {
    /// Martian landing site at 30° latitude.
    fn default() -> Self {
        Self {
            gravity: Vector3::new(0.0, 0.0, -3.7114),
            sidereal_period: 88_642.44,
            latitude: 30.0_f64.to_radians(),
            g_e: 9.807,
            omega_override: None,
        }
    }
}

/// Lander mass/propulsion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    pub m_dry: f64,  // kg, structure without propellant
    pub m_wet: f64,  // kg, initial total mass
    pub isp: f64,    // s, specific impulse
    pub n_eng: u32,  // number of descent engines
    pub t1: f64,     // N, min allowed thrust of a single engine
    pub t2: f64,     // N, max allowed thrust of a single engine
    pub v_max: f64,  // m/s, velocity envelope
    pub alpha: f64,  // s/m, mass depletion rate per unit thrust
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            m_dry: 1505.0,
            m_wet: 1905.0,
            isp: 225.0,
            n_eng: 6,
            t1: 930.0,
            t2: 2480.0,
            v_max: 138.89,
            alpha: 0.0005,
        }
    }
}

/// Solver termination settings, surfaced in the mission config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub tol: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8, verbose: false }
    }
}

/// Everything fixed across one dataset/model lineage: planet, vehicle,
/// discretization, glideslope face count, and solver settings. The final
/// position and velocity are pinned to zero by the landing-frame convention
/// (shift the frame to retarget), so they are exposed as methods, not fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub planet: PlanetConfig,
    pub vehicle: VehicleConfig,
    pub n_nodes: usize,         // trajectory discretization nodes (>= 2)
    pub glideslope_faces: usize, // polyhedral faces approximating the cone
    pub solver: SolverSettings,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            planet: PlanetConfig::default(),
            vehicle: VehicleConfig::default(),
            n_nodes: 50,
            glideslope_faces: 4,
            solver: SolverSettings::default(),
        }
    }
}

impl MissionConfig {
    /// Target landing position (landing-frame origin).
    pub fn r_f(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    /// Target landing velocity (soft touchdown).
    pub fn v_f(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    /// Planet angular velocity in the landing frame, honoring any override.
    pub fn omega(&self) -> Vector3<f64> {
        self.planet.omega_override.unwrap_or_else(|| omega_vector(&self.planet))
    }

    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let err = |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
        if !(self.planet.sidereal_period > 0.0) {
            return err("sidereal_period", "must be > 0".into());
        }
        if !(self.planet.gravity.norm() > 0.0) {
            return err("gravity", "must be nonzero".into());
        }
        if !self.planet.gravity.iter().all(|g| g.is_finite()) {
            return err("gravity", "must be finite".into());
        }
        let v = &self.vehicle;
        if !(v.m_dry > 0.0 && v.m_dry < v.m_wet) {
            return err("m_dry", format!("need 0 < m_dry < m_wet, got {} vs {}", v.m_dry, v.m_wet));
        }
        if !(v.t1 > 0.0 && v.t1 < v.t2) {
            return err("t1", format!("need 0 < t1 < t2, got {} vs {}", v.t1, v.t2));
        }
        if !(v.v_max > 0.0) {
            return err("v_max", "must be > 0".into());
        }
        if !(v.alpha > 0.0) {
            return err("alpha", "must be > 0".into());
        }
        if v.n_eng == 0 {
            return err("n_eng", "must be >= 1".into());
        }
        if self.n_nodes < 2 {
            return err("n_nodes", format!("must be >= 2, got {}", self.n_nodes));
        }
        if self.glideslope_faces < 3 {
            return err("glideslope_faces", format!("must be >= 3, got {}", self.glideslope_faces));
        }
        if self.solver.max_iter == 0 {
            return err("solver.max_iter", "must be >= 1".into());
        }
        if !(self.solver.tol > 0.0) {
            return err("solver.tol", "must be > 0".into());
        }
        Ok(())
    }

    /// Canonical key-value text form (also the hashing preimage).
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let p = &self.planet;
        let v = &self.vehicle;
        s.push_str("[planet]\n");
        let _ = writeln!(s, "gravity = {:?}, {:?}, {:?}", p.gravity.x, p.gravity.y, p.gravity.z);
        let _ = writeln!(s, "sidereal_period = {:?}", p.sidereal_period);
        let _ = writeln!(s, "latitude_deg = {:?}", p.latitude.to_degrees());
        let _ = writeln!(s, "g_e = {:?}", p.g_e);
        if let Some(w) = p.omega_override {
            let _ = writeln!(s, "omega = {:?}, {:?}, {:?}", w.x, w.y, w.z);
        }
        s.push_str("\n[vehicle]\n");
        let _ = writeln!(s, "m_dry = {:?}", v.m_dry);
        let _ = writeln!(s, "m_wet = {:?}", v.m_wet);
        let _ = writeln!(s, "isp = {:?}", v.isp);
        let _ = writeln!(s, "n_eng = {}", v.n_eng);
        let _ = writeln!(s, "t1 = {:?}", v.t1);
        let _ = writeln!(s, "t2 = {:?}", v.t2);
        let _ = writeln!(s, "v_max = {:?}", v.v_max);
        let _ = writeln!(s, "alpha = {:?}", v.alpha);
        s.push_str("\n[discretization]\n");
        let _ = writeln!(s, "n_nodes = {}", self.n_nodes);
        s.push_str("\n[glideslope]\n");
        let _ = writeln!(s, "faces = {}", self.glideslope_faces);
        s.push_str("\n[solver]\n");
        let _ = writeln!(s, "max_iter = {}", self.solver.max_iter);
        let _ = writeln!(s, "tol = {:?}", self.solver.tol);
        let _ = writeln!(s, "verbose = {}", self.solver.verbose);
        s
    }

    /// Parse the key-value text form. Starts from defaults, so a file needs
    /// to name only the entries it overrides; unknown keys are rejected.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = MissionConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            apply_config_key(&mut cfg, &section, key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_config_text())?;
        Ok(())
    }

    /// SHA-256 of the canonical text form, hex-encoded. Stamped into dataset
    /// headers and model bundles so cross-configuration mixing is detectable.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_config_text().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

fn parse_f64(value: &str) -> std::result::Result<f64, String> {
    value.parse::<f64>().map_err(|_| format!("`{value}` is not a number"))
}

fn parse_vec3(value: &str) -> std::result::Result<Vector3<f64>, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("`{value}` is not a comma-separated 3-vector"));
    }
    Ok(Vector3::new(parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?))
}

fn apply_config_key(
    cfg: &mut MissionConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    let parse_usize =
        |v: &str| v.parse::<usize>().map_err(|_| format!("`{v}` is not a non-negative integer"));
    match (section, key) {
        ("planet", "gravity") => cfg.planet.gravity = parse_vec3(value)?,
        ("planet", "sidereal_period") => cfg.planet.sidereal_period = parse_f64(value)?,
        ("planet", "latitude_deg") => cfg.planet.latitude = parse_f64(value)?.to_radians(),
        ("planet", "g_e") => cfg.planet.g_e = parse_f64(value)?,
        ("planet", "omega") => cfg.planet.omega_override = Some(parse_vec3(value)?),
        ("vehicle", "m_dry") => cfg.vehicle.m_dry = parse_f64(value)?,
        ("vehicle", "m_wet") => cfg.vehicle.m_wet = parse_f64(value)?,
        ("vehicle", "isp") => cfg.vehicle.isp = parse_f64(value)?,
        ("vehicle", "n_eng") => {
            cfg.vehicle.n_eng =
                value.parse::<u32>().map_err(|_| format!("`{value}` is not a count"))?
        }
        ("vehicle", "t1") => cfg.vehicle.t1 = parse_f64(value)?,
        ("vehicle", "t2") => cfg.vehicle.t2 = parse_f64(value)?,
        ("vehicle", "v_max") => cfg.vehicle.v_max = parse_f64(value)?,
        ("vehicle", "alpha") => cfg.vehicle.alpha = parse_f64(value)?,
        ("discretization", "n_nodes") => cfg.n_nodes = parse_usize(value)?,
        ("glideslope", "faces") => cfg.glideslope_faces = parse_usize(value)?,
        ("solver", "max_iter") => {
            cfg.solver.max_iter =
                value.parse::<u32>().map_err(|_| format!("`{value}` is not a count"))?
        }
        ("solver", "tol") => cfg.solver.tol = parse_f64(value)?,
        ("solver", "verbose") => {
            cfg.solver.verbose =
                value.parse::<bool>().map_err(|_| format!("`{value}` is not true/false"))?
        }
        _ => return Err(format!("unknown key `{key}` in section `[{section}]`")),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Parameter vector
// ---------------------------------------------------------------------------

/// The 9 sampled scalars that define one problem instance: engine cant angle,
/// glideslope cone half-angle (from vertical), thrust pointing half-angle
/// (from vertical), initial position, initial velocity.
///
/// Canonical scalar order: `[phi, gamma_gs, gamma_p, r0x, r0y, r0z, v0x, v0y, v0z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParameters {
    pub phi: f64,       // rad, engine cant from the thrust axis, [0, pi/2)
    pub gamma_gs: f64,  // rad, glideslope cone half-angle, (0, pi/2]
    pub gamma_p: f64,   // rad, pointing cone half-angle, (0, pi/2)
    pub r0: Vector3<f64>, // m, initial position (r0z > 0)
    pub v0: Vector3<f64>, // m/s, initial velocity
}

/// Column names of the canonical 9-scalar parameter form, in order.
pub const THETA_FIELDS: [&str; 9] = [
    "phi", "gamma_gs", "gamma_p", "r0x", "r0y", "r0z", "v0x", "v0y", "v0z",
];

impl ProblemParameters {
    /// Canonical 9-scalar form (angles stay in radians).
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.phi, self.gamma_gs, self.gamma_p, //
            self.r0.x, self.r0.y, self.r0.z, //
            self.v0.x, self.v0.y, self.v0.z,
        ]
    }

    /// Rebuild from the canonical 9-scalar form, revalidating domains.
    pub fn from_array(a: &[f64; 9]) -> Result<Self> {
        make_theta(
            a[0],
            a[1],
            a[2],
            Vector3::new(a[3], a[4], a[5]),
            Vector3::new(a[6], a[7], a[8]),
        )
    }
}

/// Validate and assemble a parameter vector.
///
/// Domains: `0 <= phi < pi/2`, `0 < gamma_gs <= pi/2`, `0 < gamma_p < pi/2`,
/// `r0_z > 0`, everything finite. Violations name the offending field.
pub fn make_theta(
    phi: f64,
    gamma_gs: f64,
    gamma_p: f64,
    r0: Vector3<f64>,
    v0: Vector3<f64>,
) -> Result<ProblemParameters> {
    let err = |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
    for (name, value) in [("phi", phi), ("gamma_gs", gamma_gs), ("gamma_p", gamma_p)] {
        if !value.is_finite() {
            return err(name, "must be finite".into());
        }
    }
    if !r0.iter().all(|x| x.is_finite()) {
        return err("r0", "must be finite".into());
    }
    if !v0.iter().all(|x| x.is_finite()) {
        return err("v0", "must be finite".into());
    }
    if !(0.0..PI / 2.0).contains(&phi) {
        return err("phi", format!("need 0 <= phi < pi/2, got {phi}"));
    }
    if !(gamma_gs > 0.0 && gamma_gs <= PI / 2.0) {
        return err("gamma_gs", format!("need 0 < gamma_gs <= pi/2, got {gamma_gs}"));
    }
    if !(gamma_p > 0.0 && gamma_p < PI / 2.0) {
        return err("gamma_p", format!("need 0 < gamma_p < pi/2, got {gamma_p}"));
    }
    if !(r0.z > 0.0) {
        return err("r0_z", format!("initial altitude must be > 0, got {}", r0.z));
    }
    Ok(ProblemParameters { phi, gamma_gs, gamma_p, r0, v0 })
}

// ---------------------------------------------------------------------------
// Derived physics
// ---------------------------------------------------------------------------

/// Planet angular velocity in the east-north-up landing frame: the spin axis
/// lies in the north-up plane, tilted from local vertical by the colatitude,
/// so `omega = (2*pi/T) * (0, cos(latitude), sin(latitude))`.
pub fn omega_vector(planet: &PlanetConfig) -> Vector3<f64> {
    let rate = 2.0 * PI / planet.sidereal_period; // rad/s
    rate * Vector3::new(0.0, planet.latitude.cos(), planet.latitude.sin())
}

/// Net thrust bounds along the vehicle axis with all engines canted by `phi`:
/// `(n_eng * t1 * cos(phi), n_eng * t2 * cos(phi))`.
pub fn effective_thrust_bounds(vehicle: &VehicleConfig, phi: f64) -> (f64, f64) {
    let axial = f64::from(vehicle.n_eng) * phi.cos();
    (axial * vehicle.t1, axial * vehicle.t2)
}

// ---------------------------------------------------------------------------
// Global-optimality assumption checks
// ---------------------------------------------------------------------------

/// Outcome of one assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionCheck {
    Pass,
    Fail,
    /// Cannot be decided from the configuration alone; evaluated after a
    /// solve by inspecting which nodes the constraint is tight at.
    TrajectoryDependent,
}

/// Report on the five conditions under which the convex relaxation is exact
/// (its optimum solves the original nonconvex problem).
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// (1) The 6-state translational system (A, B) is controllable.
    pub controllability: AssumptionCheck,
    /// (2) The planet does not rotate about the local vertical.
    pub rotation_off_vertical: AssumptionCheck,
    /// (3) Glideslope contact is only instantaneous along the trajectory.
    pub glideslope_activation: AssumptionCheck,
    /// (4a) Thrust floor vs. hover weight over the pointing/glideslope arc.
    pub thrust_floor: AssumptionCheck,
    /// (4b) Thrust ceiling vs. hover weight over the same arc.
    pub thrust_ceiling: AssumptionCheck,
    /// (5) The velocity bound activates at most a discrete number of times.
    pub velocity_activation: AssumptionCheck,
    /// Evaluated extremes backing 4a/4b: lhs is the thrust-side term at the
    /// cos-extremizing arc angle, rhs the gravity-side term.
    pub thrust_floor_lhs: f64,
    pub thrust_floor_rhs: f64,
    pub thrust_ceiling_lhs: f64,
    pub thrust_ceiling_rhs: f64,
}

impl AssumptionReport {
    /// True iff every statically decidable assumption passed.
    pub fn static_checks_pass(&self) -> bool {
        [self.controllability, self.rotation_off_vertical, self.thrust_floor, self.thrust_ceiling]
            .iter()
            .all(|c| *c == AssumptionCheck::Pass)
    }
}

/// Extremes of cos over the closed interval `[lo, hi]`: endpoint values plus
/// the interior stationary points at integer multiples of pi.
fn cos_extrema(lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.cos(), hi.cos());
    let (mut min, mut max) = (a.min(b), a.max(b));
    let k_lo = (lo / PI).ceil() as i64;
    let k_hi = (hi / PI).floor() as i64;
    for k in k_lo..=k_hi {
        let v = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

/// Evaluate the statically checkable optimality assumptions for one problem
/// instance. This is a report, never an error: downstream code decides what
/// to do with failures.
pub fn validate_lcvx_assumptions(
    mission: &MissionConfig,
    params: &ProblemParameters,
) -> AssumptionReport {
    let omega = mission.omega();

    // (1) Kalman rank of the 6-state system
    //     A = [[0, I], [-W*W, -2W]], B = [[0], [I]], W = cross-product matrix of omega.
    let w = omega.cross_matrix();
    let mut a = DMatrix::<f64>::zeros(6, 6);
    a.view_mut((0, 3), (3, 3)).copy_from(&nalgebra::Matrix3::identity());
    a.view_mut((3, 0), (3, 3)).copy_from(&(-w * w));
    a.view_mut((3, 3), (3, 3)).copy_from(&(-2.0 * w));
    let mut b = DMatrix::<f64>::zeros(6, 3);
    b.view_mut((3, 0), (3, 3)).copy_from(&nalgebra::Matrix3::identity());
    let mut kalman = DMatrix::<f64>::zeros(6, 18);
    let mut block = b.clone();
    for j in 0..6 {
        kalman.view_mut((0, 3 * j), (6, 3)).copy_from(&block);
        block = &a * block;
    }
    let controllable = kalman.rank(1e-9) == 6;

    // (2) omega x e_z != 0, scaled relative to |omega| so tiny but genuinely
    //     tilted spins still pass and a polar site fails.
    let omega_norm = omega.norm();
    let off_vertical = if omega_norm == 0.0 {
        false
    } else {
        omega.cross(&Vector3::z()).norm() > 1e-12 * omega_norm
    };

    // (4) Thrust bounds vs. gravity over the arc of candidate thrust-vs-
    //     position angles implied by the pointing and glideslope cones.
    let (rho_min, rho_max) = effective_thrust_bounds(&mission.vehicle, params.phi);
    let lo = PI / 2.0 - params.gamma_p - params.gamma_gs;
    let hi = PI / 2.0 + params.gamma_p - params.gamma_gs;
    let (cos_min, cos_max) = cos_extrema(lo, hi);
    let g_norm = mission.planet.gravity.norm();
    let sin_gs = params.gamma_gs.sin();
    let floor_lhs = rho_min * cos_max;
    let floor_rhs = mission.vehicle.m_dry * g_norm * sin_gs;
    let ceiling_lhs = rho_max * cos_min;
    let ceiling_rhs = mission.vehicle.m_wet * g_norm * sin_gs;

    let to_check = |ok: bool| if ok { AssumptionCheck::Pass } else { AssumptionCheck::Fail };
    AssumptionReport {
        controllability: to_check(controllable),
        rotation_off_vertical: to_check(off_vertical),
        glideslope_activation: AssumptionCheck::TrajectoryDependent,
        thrust_floor: to_check(floor_lhs < floor_rhs),
        thrust_ceiling: to_check(ceiling_lhs > ceiling_rhs),
        velocity_activation: AssumptionCheck::TrajectoryDependent,
        thrust_floor_lhs: floor_lhs,
        thrust_floor_rhs: floor_rhs,
        thrust_ceiling_lhs: ceiling_lhs,
        thrust_ceiling_rhs: ceiling_rhs,
    }
}

/// The reference problem instance used throughout tests and docs: 10° cant,
/// 80° glideslope, 60° pointing, starting 2 km east/north and 1 km up with a
/// mild approach velocity.
pub fn reference_theta() -> ProblemParameters {
    make_theta(
        10.0_f64.to_radians(),
        80.0_f64.to_radians(),
        60.0_f64.to_radians(),
        Vector3::new(2000.0, 2000.0, 1000.0),
        Vector3::new(-15.0, -15.0, -30.0),
    )
    .expect("reference parameters are valid")
}
