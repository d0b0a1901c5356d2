//! The recognition network: input embedding with positional encoding, nine
//! spatial/temporal blocks, a pooled classification head, and the
//! class-template auxiliary head used only while training.

mod files;
mod forward;
mod layers;
mod loss;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ShapeError;
use crate::mha_gc::GraphError;
use crate::prior_graphs::PriorError;

pub use files::{
    read_dataset, read_dataset_value, write_dataset, ModelFile, ScoreRecord, ScoresFile,
};
pub use forward::{forward_batch, model_forward, BnMode, ForwardOutput};
pub use layers::{
    batch_norm, embed_input, ms_tc_forward, pcac_logits, sinusoidal_pe, BnStats, FeatureMap,
};
pub use loss::{aux_loss, ensemble_scores, softmax, total_loss, Ensemble, LossBreakdown};
pub use params::{
    init_params, BatchNorm, BlockParams, ModelParams, MsTcParams, Projection, TemporalBranch,
};
pub use train::{
    batch_loss, central_difference, fd_gradient, loss_gradient, micro_train, synthetic_dataset,
    synthetic_templates, MicroTrainConfig, SyntheticConfig, TrainSample, TrainStep, TrainTrace,
    MICRO_PARAM_LIMIT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sequence of {frames} frames is shorter than the temporal receptive field {required}")]
    TooShort { frames: usize, required: usize },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

impl From<ShapeError> for ModelError {
    fn from(e: ShapeError) -> Self {
        ModelError::DimensionMismatch(e.message().to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PeKind {
    #[default]
    Sinusoidal,
    /// No positional term; used by tests that need a purely linear embedding.
    Disabled,
}

/// Multi-scale temporal block layout shared by every block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig {
    /// Odd kernel size of the dilated branches.
    pub kernel: usize,
    /// One dilated branch per entry.
    pub dilations: Vec<usize>,
    /// Odd max-pool window.
    pub pool_window: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            kernel: 5,
            dilations: vec![1, 2],
            pool_window: 3,
        }
    }
}

impl TemporalConfig {
    /// Frames a branch window spans, i.e. the shortest admissible input.
    pub fn receptive_field(&self) -> usize {
        let conv = self
            .dilations
            .iter()
            .map(|d| d * (self.kernel - 1) + 1)
            .max()
            .unwrap_or(1);
        conv.max(self.pool_window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub joints: usize,
    pub classes: usize,
    pub in_dims: usize,
    pub frames: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub beta: f64,
    /// Hops of the multi-hop diffusion.
    pub hops: usize,
    /// When set, only the first block diffuses over `hops`; later blocks use one hop.
    pub mha_first_layer_only: bool,
    pub lambda: f64,
    /// 1-based block whose output feeds the auxiliary head.
    pub aux_tap: usize,
    pub pe_kind: PeKind,
    pub temporal: TemporalConfig,
    /// Initial refinement weight of each attention layer.
    pub gamma_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            joints: 25,
            classes: 120,
            in_dims: 3,
            frames: 64,
            channels: vec![64, 64, 64, 128, 128, 128, 256, 256, 256],
            strides: vec![1, 1, 1, 2, 1, 2, 1, 1, 1],
            beta: 0.5,
            hops: 4,
            mha_first_layer_only: true,
            lambda: 0.2,
            aux_tap: 9,
            pe_kind: PeKind::Sinusoidal,
            temporal: TemporalConfig::default(),
            gamma_init: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn hops_for(&self, block: usize) -> usize {
        if self.mha_first_layer_only && block > 0 {
            1
        } else {
            self.hops
        }
    }

    /// Frame count entering each block, followed by the final count.
    pub fn frame_schedule(&self) -> Vec<usize> {
        let mut t = self.frames;
        let mut out = vec![t];
        for &s in &self.strides {
            t = (t - 1) / s + 1;
            out.push(t);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.joints < 2 {
            return bad(format!("joints must be >= 2, got {}", self.joints));
        }
        if self.classes == 0 || self.in_dims == 0 || self.frames == 0 {
            return bad("classes, in_dims and frames must be positive".into());
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channel schedule must be non-empty and positive".into());
        }
        if self.strides.len() != self.channels.len() || self.strides.contains(&0) {
            return bad(format!(
                "{} strides for {} blocks",
                self.strides.len(),
                self.channels.len()
            ));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.aux_tap == 0 || self.aux_tap > self.blocks() {
            return bad(format!(
                "aux_tap {} outside blocks 1..={}",
                self.aux_tap,
                self.blocks()
            ));
        }
        let tc = &self.temporal;
        if tc.kernel.is_multiple_of(2) || tc.pool_window.is_multiple_of(2) {
            return bad("temporal kernel and pool window must be odd".into());
        }
        if tc.dilations.is_empty() || tc.dilations.contains(&0) {
            return bad("dilations must be non-empty and positive".into());
        }
        if !self.gamma_init.is_finite() {
            return bad("gamma_init must be finite".into());
        }
        let need = tc.receptive_field();
        for (b, &t) in self.frame_schedule()[..self.blocks()].iter().enumerate() {
            if t < need {
                return bad(format!(
                    "block {} sees {t} frames, fewer than the receptive field {need}",
                    b + 1
                ));
            }
        }
        Ok(())
    }
}
