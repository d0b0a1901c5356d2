//! Skeleton action recognition toolkit: skeleton I/O, prior graphs from text
//! embeddings, bone selection, multi-hop attention graph convolution and the
//! recognition model.

pub mod bone_select;
pub mod canonical;
pub mod error;
pub mod linalg;
pub mod mha_gc;
pub mod model;
pub mod prior_graphs;
pub mod skeleton_io;

pub use bone_select::{BoneError, BoneMatrix, CandidateScores};
pub use canonical::FloatFormat;
pub use error::{Error, Result, ShapeError};
pub use linalg::Matrix;
pub use mha_gc::{AttentionParams, DiffusionConfig, DiffusionMode, GraphError};
pub use model::{ModelConfig, ModelError, ModelParams};
pub use prior_graphs::{ClassTemplateSet, EmbeddingTable, GprGraph, PriorError, PromptId};
pub use skeleton_io::{SkeletonError, SkeletonSequence};
