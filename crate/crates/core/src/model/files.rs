use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::params::ModelParams;
use super::train::TrainSample;
use super::ModelConfig;
use crate::canonical::{self, FloatFormat};
use crate::skeleton_io::{read_canonical_value, write_canonical, SkeletonError, SkeletonSequence};

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Sample identifier; string or number.
    pub id: Value,
    pub logits: Vec<f64>,
}

/// `{"samples": [{"id": ..., "logits": [...]}, ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoresFile {
    pub samples: Vec<ScoreRecord>,
}

impl ScoresFile {
    pub fn logits(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.logits.clone()).collect()
    }
}

/// Labeled sequences as `{"version":1,"samples":[<canonical sequence>, ...]}`.
pub fn write_dataset(samples: &[TrainSample], fmt: FloatFormat) -> String {
    let items: Vec<Value> = samples
        .iter()
        .map(|s| {
            let seq = s.sequence.clone().with_label(Some(s.label));
            serde_json::from_str(&write_canonical(&seq, FloatFormat::Full))
                .expect("canonical output is valid JSON")
        })
        .collect();
    canonical::to_string(&json!({"version": 1, "samples": items}), fmt)
        .expect("finite values always serialize")
}

/// Reads a dataset file; every sample must carry a label.
pub fn read_dataset(src: &str) -> Result<Vec<TrainSample>, SkeletonError> {
    let value: Value = serde_json::from_str(src).map_err(|e| SkeletonError::SchemaViolation {
        path: "/".into(),
        reason: e.to_string(),
    })?;
    read_dataset_value(&value)
}

pub fn read_dataset_value(value: &Value) -> Result<Vec<TrainSample>, SkeletonError> {
    let items = value
        .get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| SkeletonError::SchemaViolation {
            path: "/samples".into(),
            reason: "expected array".into(),
        })?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let sequence: SkeletonSequence = read_canonical_value(item).map_err(|e| match e {
                SkeletonError::SchemaViolation { path, reason } => SkeletonError::SchemaViolation {
                    path: format!("/samples/{i}{path}"),
                    reason,
                },
                other => other,
            })?;
            let label = sequence
                .label
                .ok_or_else(|| SkeletonError::SchemaViolation {
                    path: format!("/samples/{i}/label"),
                    reason: "training samples need a label".into(),
                })?;
            Ok(TrainSample { sequence, label })
        })
        .collect()
}
