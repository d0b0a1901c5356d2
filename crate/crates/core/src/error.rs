use thiserror::Error;

use crate::bone_select::BoneError;
use crate::mha_gc::GraphError;
use crate::model::ModelError;
use crate::prior_graphs::PriorError;
use crate::skeleton_io::SkeletonError;

/// Operand shapes that do not fit together.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch: {0}")]
pub struct ShapeError(String);

impl ShapeError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }

    pub fn message(&self) -> &str {
        &self.0
    }
}

/// Umbrella error for callers that drive several modules at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Bone(#[from] BoneError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Graph(e) | Error::Model(ModelError::Graph(e)) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
