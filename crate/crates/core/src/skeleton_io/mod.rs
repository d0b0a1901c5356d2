//! Skeleton sequences: parsing, canonical JSON, resampling and derived
//! streams (bone and motion).

mod json;
mod ntu;
mod streams;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use json::{read_canonical, read_canonical_value, write_canonical};
pub use ntu::{label_from_ntu_name, parse_ntu_text, read_ntu_file};
pub use streams::{bone_stream, motion_stream, preprocess};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkeletonError {
    #[error("line {line}: expected {expected}")]
    MalformedLine { line: usize, expected: Expected },
    #[error("line {line}: body {body:?} declares {found} joints, earlier frames had {expected}")]
    JointCountMismatch {
        line: usize,
        body: String,
        expected: usize,
        found: usize,
    },
    #[error("file contains no skeleton frames")]
    EmptyFile,
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
}

/// Token class the NTU parser was looking for when it failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    FrameCount,
    BodyCount,
    BodyHeader,
    JointCount,
    JointCoordinates,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expected::FrameCount => "integer frame count",
            Expected::BodyCount => "integer body count",
            Expected::BodyHeader => "body header line",
            Expected::JointCount => "integer joint count",
            Expected::JointCoordinates => "joint line with at least 3 real fields",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceWarning {
    /// The body was absent from these frames; its joints were zero-filled.
    ZeroFilledFrames(Vec<usize>),
    /// A single-frame input was repeated to reach the target length.
    RepeatedSingleFrame,
}

/// A `T × V × d` coordinate tensor, row-major in (frame, joint, coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: usize,
    joints: usize,
    dims: usize,
    data: Vec<f64>,
    pub label: Option<usize>,
    /// Opaque subject/body metadata carried through from the source.
    pub meta: BTreeMap<String, String>,
    pub warnings: Vec<SequenceWarning>,
}

impl SkeletonSequence {
    pub fn new(
        frames: usize,
        joints: usize,
        dims: usize,
        data: Vec<f64>,
    ) -> Result<Self, SkeletonError> {
        if frames == 0 {
            return Err(SkeletonError::InvalidSequence("frames must be >= 1".into()));
        }
        if joints < 2 {
            return Err(SkeletonError::InvalidSequence("joints must be >= 2".into()));
        }
        if dims == 0 {
            return Err(SkeletonError::InvalidSequence("dims must be >= 1".into()));
        }
        if data.len() != frames * joints * dims {
            return Err(SkeletonError::DimensionMismatch(format!(
                "{} values for a {frames}x{joints}x{dims} tensor",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(SkeletonError::InvalidSequence(format!(
                "non-finite coordinate at flat index {pos}"
            )));
        }
        Ok(Self {
            frames,
            joints,
            dims,
            data,
            label: None,
            meta: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    /// Builds a sequence from `[frame][joint][coord]` nesting.
    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self, SkeletonError> {
        let frames = nested.len();
        let joints = nested.first().map_or(0, Vec::len);
        let dims = nested.first().and_then(|f| f.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(frames * joints * dims);
        for (t, frame) in nested.iter().enumerate() {
            if frame.len() != joints {
                return Err(SkeletonError::DimensionMismatch(format!(
                    "frame {t} has {} joints, expected {joints}",
                    frame.len()
                )));
            }
            for (v, p) in frame.iter().enumerate() {
                if p.len() != dims {
                    return Err(SkeletonError::DimensionMismatch(format!(
                        "frame {t} joint {v} has {} coordinates, expected {dims}",
                        p.len()
                    )));
                }
                data.extend_from_slice(p);
            }
        }
        Self::new(frames, joints, dims, data)
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn point(&self, t: usize, v: usize) -> &[f64] {
        let start = (t * self.joints + v) * self.dims;
        &self.data[start..start + self.dims]
    }

    #[inline]
    pub(crate) fn point_mut(&mut self, t: usize, v: usize) -> &mut [f64] {
        let start = (t * self.joints + v) * self.dims;
        &mut self.data[start..start + self.dims]
    }

    /// Frame `t` as a `V × d` matrix.
    pub fn frame_matrix(&self, t: usize) -> Matrix {
        let stride = self.joints * self.dims;
        Matrix::from_vec(
            self.joints,
            self.dims,
            self.data[t * stride..(t + 1) * stride].to_vec(),
        )
        .expect("frame slice has V*d values")
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.frames)
            .map(|t| {
                (0..self.joints)
                    .map(|v| self.point(t, v).to_vec())
                    .collect()
            })
            .collect()
    }

    /// Same shape and metadata, new coordinates.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            data,
            ..self.clone()
        }
    }

    pub fn scaled_sum(&self, a: f64, other: &Self, b: f64) -> Result<Self, SkeletonError> {
        if (self.frames, self.joints, self.dims) != (other.frames, other.joints, other.dims) {
            return Err(SkeletonError::DimensionMismatch(
                "sequences differ in shape".into(),
            ));
        }
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_frames: usize,
    /// Joint whose frame-0 position becomes the origin.
    pub center_joint: usize,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_frames: 64,
            center_joint: 0,
            interpolation: Interpolation::Linear,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = SkeletonSequence::new(1, 2, 1, vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, SkeletonError::InvalidSequence(_)));
    }

    #[test]
    fn rejects_wrong_length() {
        let err = SkeletonSequence::new(2, 2, 3, vec![0.0; 11]).unwrap_err();
        assert!(matches!(err, SkeletonError::DimensionMismatch(_)));
    }

    #[test]
    fn nested_round_trip() {
        let nested = vec![vec![vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]]];
        let s = SkeletonSequence::from_nested(&nested).unwrap();
        assert_eq!(s.point(0, 1), &[3.0, 4.0, 5.0]);
        assert_eq!(s.to_nested(), nested);
    }
}
