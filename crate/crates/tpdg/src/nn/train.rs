//! Training loop: Adam over mini-batch MSE with a seeded train/test split,
//! input standardization fitted on training data only, K-fold
//! cross-validation, and a final refit whose held-out test metrics are
//! reported.

use std::io::Write;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Dataset;

use super::model::{backward, forward, ModelWeights};
use super::{ModelBundle, PredictionTarget, Standardizer, TransformerConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Learning-rate schedule shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `base_lr` at every step.
    Constant,
    /// Linear ramp from 0 to `base_lr` over `warmup_steps`, then inverse
    /// square-root decay in the steps past warmup, capped at `base_lr`.
    WarmupInvSqrt,
}

/// Optimization hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    /// Only used by [`LrSchedule::WarmupInvSqrt`].
    pub warmup_steps: usize,
    pub k_folds: usize,
    /// Passes over the training subset, per fold and for the refit.
    pub epochs: usize,
    /// Seeds the split, shuffles, weight init, and dropout.
    pub seed: u64,
    /// Fraction of the dataset held out as the final test set.
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            base_lr: 1e-3,
            schedule: LrSchedule::Constant,
            warmup_steps: 4000,
            k_folds: 2,
            epochs: 10,
            seed: 0,
            test_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr {} must be positive", self.base_lr)));
        }
        if self.schedule == LrSchedule::WarmupInvSqrt && self.warmup_steps == 0 {
            return Err(Error::Config(
                "warmup_steps must be at least 1 for the warmup schedule".to_string(),
            ));
        }
        if self.k_folds < 2 {
            return Err(Error::Config("k_folds must be at least 2".to_string()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".to_string()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction {} must lie strictly between 0 and 1",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Learning rate at a 1-based optimizer step.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.base_lr,
        LrSchedule::WarmupInvSqrt => {
            if step <= cfg.warmup_steps {
                cfg.base_lr * step as f64 / cfg.warmup_steps as f64
            } else {
                let decay = ((step - cfg.warmup_steps) as f64).powf(-0.5);
                cfg.base_lr * decay.min(1.0)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct Adam {
    m: ModelWeights,
    v: ModelWeights,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(like: &ModelWeights) -> Adam {
        Adam { m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    /// One bias-corrected Adam update from accumulated gradients.
    fn step(&mut self, weights: &mut ModelWeights, grads: &mut ModelWeights, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let mut w = weights.tensors_mut();
        let mut m = self.m.tensors_mut();
        let mut v = self.v.tensors_mut();
        let g = grads.tensors_mut();
        for i in 0..w.len() {
            debug_assert_eq!(w[i].0, g[i].0, "tensor enumeration must stay in lockstep");
            let g_t: &ndarray::Array2<f64> = &*g[i].1;
            m[i].1
                .zip_mut_with(g_t, |m, &g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
            v[i].1
                .zip_mut_with(g_t, |v, &g| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
            for ((w_e, &m_e), &v_e) in
                w[i].1.iter_mut().zip(m[i].1.iter()).zip(v[i].1.iter())
            {
                *w_e -= lr * (m_e / bc1) / ((v_e / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One row of the training log (one per epoch).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRow {
    /// Optimizer steps taken so far in this training run.
    pub step: usize,
    /// Cross-validation fold index; `None` for the final refit.
    pub fold: Option<usize>,
    pub lr: f64,
    /// Mean mini-batch training MSE over the epoch.
    pub train_mse: f64,
    /// Validation MSE at the end of the epoch (absent during refit).
    pub val_mse: Option<f64>,
}

/// End-of-fold summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Everything measured during one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub folds: Vec<FoldMetrics>,
    /// MSE of the refit model on the held-out test set.
    pub test_mse: f64,
    /// Flag-level accuracy on the test set (constraint models only).
    pub test_binary_accuracy: Option<f64>,
    pub param_count: usize,
    pub log: Vec<LogRow>,
    /// Dataset indices of the held-out test rows.
    pub test_indices: Vec<usize>,
}

impl TrainReport {
    /// Write the per-epoch log as CSV (`step,fold,lr,train_mse,val_mse`;
    /// refit rows carry `refit` in the fold column).
    pub fn write_log_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "step,fold,lr,train_mse,val_mse")?;
        for row in &self.log {
            let fold = row.fold.map_or_else(|| "refit".to_string(), |f| f.to_string());
            let val = row.val_mse.map_or_else(String::new, |v| format!("{v:?}"));
            writeln!(
                out,
                "{},{},{:?},{:?},{}",
                row.step, fold, row.lr, row.train_mse, val
            )?;
        }
        Ok(())
    }
}

/// A fitted model together with its training report.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub bundle: ModelBundle,
    pub report: TrainReport,
}

/// Fraction of flags where the thresholded prediction (≥ 0.5) matches the
/// truth.
pub fn binary_accuracy(predicted: &[f64], truth: &[bool]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction/label widths differ");
    if truth.is_empty() {
        return 1.0;
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, &t)| (**p >= 0.5) == t)
        .count();
    hits as f64 / truth.len() as f64
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

fn target_row(sample_tau: &[bool], t_f: f64, target: PredictionTarget) -> Vec<f64> {
    match target {
        PredictionTarget::Constraints => {
            sample_tau.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
        }
        PredictionTarget::FinalTime => vec![t_f],
    }
}

/// Mean per-sample MSE of the model over the given rows (evaluation mode).
fn eval_mse(
    weights: &ModelWeights,
    cfg: &TransformerConfig,
    rows: &[usize],
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for &i in rows {
        let pass = forward(weights, cfg, &features[i], None)?;
        let t = &targets[i];
        let se: f64 = pass
            .output
            .iter()
            .zip(t.iter())
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        total += se / t.len() as f64;
    }
    Ok(total / rows.len().max(1) as f64)
}

struct RunResult {
    weights: ModelWeights,
    mean_train_mse: f64,
}

/// Train a fresh model on `train_rows`, logging one row per epoch.
/// `val_rows` is empty for the refit run.
#[allow(clippy::too_many_arguments)]
fn run_training(
    cfg: &TransformerConfig,
    train_cfg: &TrainConfig,
    fold: Option<usize>,
    train_rows: &[usize],
    val_rows: &[usize],
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    seed_offset: u64,
    log: &mut Vec<LogRow>,
) -> Result<RunResult> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(seed_offset));
    let mut weights = ModelWeights::init(cfg, &mut init_rng);
    let mut dropout_rng =
        ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(seed_offset).wrapping_add(0x5eed));
    let mut order_rng =
        ChaCha8Rng::seed_from_u64(train_cfg.seed.wrapping_add(seed_offset).wrapping_add(0x0bd3));
    let mut adam = Adam::new(&weights);
    let mut step = 0usize;
    let mut order: Vec<usize> = train_rows.to_vec();
    let mut last_epoch_mse = f64::INFINITY;

    for _epoch in 0..train_cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss_sum = 0.0;
        let mut epoch_batches = 0usize;
        let mut lr = lr_schedule(1, train_cfg);
        for batch in order.chunks(train_cfg.batch_size) {
            step += 1;
            lr = lr_schedule(step, train_cfg);
            let mut grads = weights.zeros_like();
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let pass = forward(
                    &weights,
                    cfg,
                    &features[i],
                    if cfg.dropout > 0.0 { Some(&mut dropout_rng) } else { None },
                )?;
                let t = &targets[i];
                let out_dim = t.len() as f64;
                let mut d_out = Array1::zeros(t.len());
                let mut se = 0.0;
                for (j, (&y, &tv)) in pass.output.iter().zip(t.iter()).enumerate() {
                    let e = y - tv;
                    se += e * e;
                    d_out[j] = 2.0 * e * scale / out_dim;
                }
                batch_loss += se / out_dim * scale;
                backward(&weights, cfg, &pass, &d_out, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            adam.step(&mut weights, &mut grads, lr);
            epoch_loss_sum += batch_loss;
            epoch_batches += 1;
        }
        last_epoch_mse = epoch_loss_sum / epoch_batches.max(1) as f64;
        let val_mse = if val_rows.is_empty() {
            None
        } else {
            Some(eval_mse(&weights, cfg, val_rows, features, targets)?)
        };
        log.push(LogRow { step, fold, lr, train_mse: last_epoch_mse, val_mse });
    }

    Ok(RunResult { weights, mean_train_mse: last_epoch_mse })
}

/// Fit a predictor on a labeled dataset.
///
/// The dataset is shuffled with the configured seed and split into
/// train/validation and test parts; the input standardizer is fitted on the
/// non-test rows only. K-fold cross-validation reports per-fold validation
/// MSE, then a fresh model is refitted on all non-test rows and scored on
/// the untouched test set.
pub fn train(
    dataset: &Dataset,
    target: PredictionTarget,
    model_cfg: &TransformerConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let expected_out = target.output_dim(dataset.n_nodes);
    if model_cfg.output_dim != expected_out {
        return Err(Error::Config(format!(
            "model output_dim {} does not match target width {} for {} nodes",
            model_cfg.output_dim, expected_out, dataset.n_nodes
        )));
    }
    if model_cfg.input_dim != 9 {
        return Err(Error::Config(format!(
            "model input_dim {} does not match the 9 problem parameters",
            model_cfg.input_dim
        )));
    }
    let n = dataset.samples.len();
    let min_rows = train_cfg.k_folds.max(2) + 1;
    if n < min_rows {
        return Err(Error::Dataset(format!(
            "dataset has {n} samples; training needs at least {min_rows}"
        )));
    }
    if target == PredictionTarget::Constraints {
        if let Some(bad) = dataset
            .samples
            .iter()
            .find(|s| s.tau.len() != expected_out)
        {
            return Err(Error::Dataset(format!(
                "sample flag width {} does not match layout width {expected_out}",
                bad.tau.len()
            )));
        }
    }

    // seeded shuffle, then split off the test tail
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut n_test = ((n as f64) * train_cfg.test_fraction).round() as usize;
    n_test = n_test.clamp(1, n - train_cfg.k_folds.max(2));
    let (trainval, test) = indices.split_at(n - n_test);
    let trainval = trainval.to_vec();
    let test = test.to_vec();

    // standardizer sees only non-test rows
    let raw_features: Vec<Vec<f64>> =
        dataset.samples.iter().map(|s| s.theta.to_vec()).collect();
    let trainval_features: Vec<Vec<f64>> =
        trainval.iter().map(|&i| raw_features[i].clone()).collect();
    let standardizer = Standardizer::fit(&trainval_features)?;
    let features: Vec<Vec<f64>> =
        raw_features.iter().map(|r| standardizer.apply(r)).collect();
    let targets: Vec<Vec<f64>> = dataset
        .samples
        .iter()
        .map(|s| target_row(&s.tau, s.t_f, target))
        .collect();

    // contiguous chunks of the shuffled non-test rows form the folds
    let mut log = Vec::new();
    let mut folds = Vec::with_capacity(train_cfg.k_folds);
    let fold_len = trainval.len().div_ceil(train_cfg.k_folds);
    for fold in 0..train_cfg.k_folds {
        let lo = fold * fold_len;
        let hi = ((fold + 1) * fold_len).min(trainval.len());
        if lo >= hi {
            return Err(Error::Dataset(format!(
                "fold {fold} is empty: {} rows cannot fill {} folds",
                trainval.len(),
                train_cfg.k_folds
            )));
        }
        let val_rows: Vec<usize> = trainval[lo..hi].to_vec();
        let train_rows: Vec<usize> = trainval[..lo]
            .iter()
            .chain(trainval[hi..].iter())
            .copied()
            .collect();
        let run = run_training(
            model_cfg,
            train_cfg,
            Some(fold),
            &train_rows,
            &val_rows,
            &features,
            &targets,
            1 + fold as u64,
            &mut log,
        )?;
        let val_mse = eval_mse(&run.weights, model_cfg, &val_rows, &features, &targets)?;
        folds.push(FoldMetrics { fold, train_mse: run.mean_train_mse, val_mse });
    }

    // refit on everything outside the test set
    let refit = run_training(
        model_cfg,
        train_cfg,
        None,
        &trainval,
        &[],
        &features,
        &targets,
        0x0f17,
        &mut log,
    )?;

    let test_mse = eval_mse(&refit.weights, model_cfg, &test, &features, &targets)?;
    let test_binary_accuracy = match target {
        PredictionTarget::Constraints => {
            let mut preds = Vec::new();
            let mut truths = Vec::new();
            for &i in &test {
                let pass = forward(&refit.weights, model_cfg, &features[i], None)?;
                preds.extend(pass.output.iter().copied());
                truths.extend(targets[i].iter().map(|&v| v >= 0.5));
            }
            Some(binary_accuracy(&preds, &truths))
        }
        PredictionTarget::FinalTime => None,
    };

    let bundle = ModelBundle {
        config: model_cfg.clone(),
        target,
        layout_version: dataset.layout_version,
        mission_hash: dataset.mission_hash.clone(),
        n_nodes: dataset.n_nodes,
        standardizer,
        weights: refit.weights,
    };
    let param_count = bundle.param_count();
    Ok(TrainedModel {
        bundle,
        report: TrainReport {
            folds,
            test_mse,
            test_binary_accuracy,
            param_count,
            log,
            test_indices: test,
        },
    })
}
