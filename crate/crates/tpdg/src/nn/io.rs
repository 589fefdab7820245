//! Model persistence and embedding export.
//!
//! A trained model is stored as a single JSON document: architecture,
//! target, mission fingerprint, input standardizer, and every weight tensor
//! as base64-encoded little-endian f64 bytes — so a save/load round trip is
//! bitwise exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcvx::LAYOUT_VERSION;
use crate::problem::ProblemParameters;
use crate::sampler::Dataset;

use super::model::ModelWeights;
use super::{ModelBundle, PredictionTarget, Standardizer, TransformerConfig};

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct BundleRecord {
    layout_version: u32,
    target: PredictionTarget,
    mission_hash: String,
    n_nodes: usize,
    config: TransformerConfig,
    standardizer: Standardizer,
    tensors: Vec<TensorRecord>,
}

fn encode_tensor(name: &str, tensor: &Array2<f64>) -> TensorRecord {
    let mut bytes = Vec::with_capacity(tensor.len() * 8);
    for &v in tensor.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorRecord {
        name: name.to_string(),
        rows: tensor.nrows(),
        cols: tensor.ncols(),
        data: BASE64.encode(&bytes),
    }
}

fn decode_tensor(record: &TensorRecord) -> Result<Array2<f64>> {
    let bytes = BASE64
        .decode(&record.data)
        .map_err(|e| Error::Model(format!("tensor {}: invalid base64: {e}", record.name)))?;
    let expected = record.rows * record.cols * 8;
    if bytes.len() != expected {
        return Err(Error::Model(format!(
            "tensor {}: {} bytes for a {}x{} shape (expected {expected})",
            record.name,
            bytes.len(),
            record.rows,
            record.cols
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact(8)")))
        .collect();
    Array2::from_shape_vec((record.rows, record.cols), values)
        .map_err(|e| Error::Model(format!("tensor {}: {e}", record.name)))
}

impl ModelBundle {
    /// Serialize to JSON with bitwise-exact weights.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut weights = self.weights.clone();
        let tensors = weights
            .tensors_mut()
            .into_iter()
            .map(|(name, t)| encode_tensor(&name, t))
            .collect();
        let record = BundleRecord {
            layout_version: self.layout_version,
            target: self.target,
            mission_hash: self.mission_hash.clone(),
            n_nodes: self.n_nodes,
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
            tensors,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        self.write(&mut file)
    }

    /// Deserialize a model saved by [`ModelBundle::write`]. Refuses other
    /// layout versions and malformed or missing tensors.
    pub fn read<R: Read>(input: &mut R) -> Result<ModelBundle> {
        let record: BundleRecord = serde_json::from_reader(input)?;
        if record.layout_version != LAYOUT_VERSION {
            return Err(Error::LayoutVersion {
                found: record.layout_version,
                expected: LAYOUT_VERSION,
            });
        }
        record.config.validate()?;

        // build a correctly-shaped container, then fill every tensor by name
        let mut weights = ModelWeights::zeros(&record.config);
        let mut slots = weights.tensors_mut();
        if slots.len() != record.tensors.len() {
            return Err(Error::Model(format!(
                "model stores {} tensors, architecture needs {}",
                record.tensors.len(),
                slots.len()
            )));
        }
        for (slot, stored) in slots.iter_mut().zip(record.tensors.iter()) {
            if slot.0 != stored.name {
                return Err(Error::Model(format!(
                    "tensor order mismatch: expected {}, found {}",
                    slot.0, stored.name
                )));
            }
            let decoded = decode_tensor(stored)?;
            if decoded.dim() != slot.1.dim() {
                return Err(Error::Model(format!(
                    "tensor {}: stored shape {:?} does not match architecture shape {:?}",
                    stored.name,
                    decoded.dim(),
                    slot.1.dim()
                )));
            }
            slot.1.assign(&decoded);
        }
        drop(slots);

        Ok(ModelBundle {
            config: record.config,
            target: record.target,
            layout_version: record.layout_version,
            mission_hash: record.mission_hash,
            n_nodes: record.n_nodes,
            standardizer: record.standardizer,
            weights,
        })
    }

    pub fn load(path: &Path) -> Result<ModelBundle> {
        let mut file = BufReader::new(File::open(path)?);
        Self::read(&mut file)
    }
}

/// Write one CSV row per dataset sample: the model's pooled embedding plus
/// a coarse label for coloring (flag popcount for constraint models, the
/// rounded flight time for time models).
pub fn export_embeddings<W: Write>(
    model: &ModelBundle,
    dataset: &Dataset,
    out: &mut W,
) -> Result<()> {
    if model.layout_version != dataset.layout_version {
        return Err(Error::LayoutVersion {
            found: dataset.layout_version,
            expected: model.layout_version,
        });
    }
    if model.n_nodes != dataset.n_nodes {
        return Err(Error::Model(format!(
            "model was trained for {} nodes, dataset uses {}",
            model.n_nodes, dataset.n_nodes
        )));
    }
    if model.mission_hash != dataset.mission_hash {
        return Err(Error::MissionHashMismatch(format!(
            "model trained on mission {} but dataset comes from {}",
            model.mission_hash, dataset.mission_hash
        )));
    }

    let d = model.config.d_model;
    let mut header = String::from("id");
    for i in 0..d {
        header.push_str(&format!(",e_{i}"));
    }
    header.push_str(",label");
    writeln!(out, "{header}")?;

    for (idx, sample) in dataset.samples.iter().enumerate() {
        let theta = ProblemParameters::from_array(&sample.theta)?;
        let pred = model.predict_raw(&theta)?;
        let label: i64 = match model.target {
            PredictionTarget::Constraints => {
                sample.tau.iter().filter(|&&b| b).count() as i64
            }
            PredictionTarget::FinalTime => sample.t_f.round() as i64,
        };
        let mut row = idx.to_string();
        for v in &pred.embedding {
            row.push_str(&format!(",{v:?}"));
        }
        row.push_str(&format!(",{label}"));
        writeln!(out, "{row}")?;
    }
    Ok(())
}
