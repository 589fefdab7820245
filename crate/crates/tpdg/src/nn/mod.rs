//! Learned strategy prediction: small transformer regressors that map the
//! nine problem parameters to (a) the tight-constraint flag vector and
//! (b) the optimal flight time, plus the training loop, serialization, and
//! the glue that turns raw model outputs into a [`Strategy`].
//!
//! Everything here is self-contained: forward pass, backpropagation, and
//! the Adam optimizer are implemented directly over `ndarray` so that the
//! learned component has no opaque dependencies.

pub mod io;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcvx::{max_burn_time, ConstraintLayout, Strategy, LAYOUT_VERSION};
use crate::problem::{MissionConfig, ProblemParameters};

pub use io::export_embeddings;
pub use model::{attention, forward, softmax_rows, ForwardPass, LayerWeights, ModelWeights};
pub use train::{
    binary_accuracy, lr_schedule, train, FoldMetrics, LogRow, LrSchedule, TrainConfig, TrainReport,
    TrainedModel,
};

/// Which quantity a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTarget {
    /// The 8N−3 tight-constraint flags.
    Constraints,
    /// The optimal flight time (one scalar).
    FinalTime,
}

impl PredictionTarget {
    /// Output width for a mission discretized on `n_nodes` nodes.
    pub fn output_dim(self, n_nodes: usize) -> usize {
        match self {
            PredictionTarget::Constraints => 8 * n_nodes - 3,
            PredictionTarget::FinalTime => 1,
        }
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Dropout probability in [0, 1), applied after attention and
    /// feedforward during training only.
    pub dropout: f64,
    /// Number of input scalars (nine problem parameters).
    pub input_dim: usize,
    pub output_dim: usize,
    /// Ablation mode: feed the whole input as one token instead of one
    /// token per scalar.
    pub single_token: bool,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return Err(Error::Config(
                "transformer dimensions must all be positive".to_string(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must lie in [0, 1)",
                self.dropout
            )));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(
                "input_dim and output_dim must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Per-head key/query width.
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Number of tokens the encoder sees.
    pub fn seq_len(&self) -> usize {
        if self.single_token { 1 } else { self.input_dim }
    }

    /// Width of one raw token before embedding.
    pub fn token_dim(&self) -> usize {
        if self.single_token { self.input_dim } else { 1 }
    }
}

/// Per-feature affine normalization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit column means and standard deviations. Columns with (near-)zero
    /// spread get a unit scale so constant features pass through centered.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Standardizer> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Dataset("cannot fit a standardizer on zero rows".to_string()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dataset("standardizer rows have inconsistent widths".to_string()));
        }
        let mut mean = vec![0.0; width];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut std = vec![0.0; width];
        for row in rows {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(row) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, standardized: &[f64]) -> Vec<f64> {
        standardized
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Raw model evaluation on one parameter vector.
#[derive(Debug, Clone)]
pub struct RawPrediction {
    /// Decoder output (flag logits-as-regression or the flight time).
    pub output: Vec<f64>,
    /// Mean-pooled final representation, `d_model` long.
    pub embedding: Vec<f64>,
}

/// A trained model plus everything needed to apply it: architecture,
/// target, input normalization, and the mission/layout it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: TransformerConfig,
    pub target: PredictionTarget,
    pub layout_version: u32,
    pub mission_hash: String,
    pub n_nodes: usize,
    pub standardizer: Standardizer,
    pub weights: ModelWeights,
}

impl ModelBundle {
    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    /// Refuse to run against a mission other than the one trained on.
    pub fn check_mission(&self, mission: &MissionConfig) -> Result<()> {
        if self.layout_version != LAYOUT_VERSION {
            return Err(Error::LayoutVersion {
                found: self.layout_version,
                expected: LAYOUT_VERSION,
            });
        }
        if self.n_nodes != mission.n_nodes {
            return Err(Error::Model(format!(
                "model was trained for {} nodes, mission uses {}",
                self.n_nodes, mission.n_nodes
            )));
        }
        if self.mission_hash != mission.hash() {
            return Err(Error::MissionHashMismatch(format!(
                "model trained on mission {} but applied to {}",
                self.mission_hash,
                mission.hash()
            )));
        }
        Ok(())
    }

    /// Evaluate the model (no dropout) on raw, unstandardized parameters.
    pub fn predict_raw(&self, theta: &ProblemParameters) -> Result<RawPrediction> {
        let standardized = self.standardizer.apply(&theta.to_array());
        let pass = model::forward(&self.weights, &self.config, &standardized, None)?;
        Ok(RawPrediction {
            output: pass.output.to_vec(),
            embedding: pass.pooled.to_vec(),
        })
    }
}

/// Knobs for turning raw predictions into a candidate strategy.
#[derive(Debug, Clone)]
pub struct PredictOptions {
    /// A flag output at or above this threshold is predicted tight.
    pub tau_on: f64,
    /// Relative safety margin applied to the predicted flight time.
    pub time_margin: f64,
    /// Lower clamp for the predicted flight time.
    pub t_lo: f64,
    /// Upper clamp; `None` uses the fuel-exhaustion burn bound.
    pub t_hi: Option<f64>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { tau_on: 0.5, time_margin: 0.0, t_lo: 5.0, t_hi: None }
    }
}

/// Combine the two predictors into a candidate strategy for `theta`:
/// binarize the constraint model's outputs and clamp the time model's
/// flight time into the physically meaningful window.
pub fn predict_strategy(
    constraint_model: &ModelBundle,
    time_model: &ModelBundle,
    mission: &MissionConfig,
    theta: &ProblemParameters,
    opts: &PredictOptions,
) -> Result<Strategy> {
    if constraint_model.target != PredictionTarget::Constraints {
        return Err(Error::Model(
            "constraint_model does not predict constraint flags".to_string(),
        ));
    }
    if time_model.target != PredictionTarget::FinalTime {
        return Err(Error::Model("time_model does not predict the flight time".to_string()));
    }
    constraint_model.check_mission(mission)?;
    time_model.check_mission(mission)?;

    let layout = ConstraintLayout::new(mission.n_nodes)?;
    let flags = constraint_model.predict_raw(theta)?;
    if flags.output.len() != layout.flag_count() {
        return Err(Error::Model(format!(
            "constraint model emits {} values, layout needs {}",
            flags.output.len(),
            layout.flag_count()
        )));
    }
    let tau: Vec<bool> = flags.output.iter().map(|&v| v >= opts.tau_on).collect();

    let time = time_model.predict_raw(theta)?;
    if time.output.len() != 1 {
        return Err(Error::Model(format!(
            "time model emits {} values, expected 1",
            time.output.len()
        )));
    }
    let mut t_f = time.output[0] * (1.0 + opts.time_margin);
    let burn_bound = max_burn_time(mission, theta);
    let hi = opts.t_hi.unwrap_or(burn_bound).min(burn_bound);
    t_f = t_f.clamp(opts.t_lo, hi);

    Strategy::new(tau, t_f)
}
