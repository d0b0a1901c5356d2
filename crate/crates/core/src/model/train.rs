//! Finite-difference gradient descent on small configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{forward_batch, forward_resume, forward_traced, BnMode, ForwardOutput};
use super::layers::{pcac_logits, BnStats};
use super::loss::{aux_loss, total_loss, LossBreakdown};
use super::params::{init_params, ModelParams};
use super::{ModelConfig, ModelError, TemporalConfig};
use crate::prior_graphs::{build_templates, ClassTemplateSet, EmbeddingTable, PromptId};
use crate::skeleton_io::SkeletonSequence;

/// Trainable-parameter ceiling for [`micro_train`].
pub const MICRO_PARAM_LIMIT: usize = 2000;
const MAX_JOINTS: usize = 6;
const MAX_FRAMES: usize = 8;
const MAX_CHANNELS: usize = 8;
const MAX_BLOCKS: usize = 2;
const MAX_CLASSES: usize = 3;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub sequence: SkeletonSequence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub per_class: usize,
    /// Half-width of the uniform coordinate noise.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            per_class: 2,
            noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MicroTrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub lr: f64,
    pub fd_step: f64,
    pub data: SyntheticConfig,
}

impl Default for MicroTrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                joints: 6,
                classes: 3,
                in_dims: 3,
                frames: 8,
                channels: vec![4, 4],
                strides: vec![1, 1],
                aux_tap: 2,
                temporal: TemporalConfig {
                    kernel: 3,
                    dilations: vec![1, 2],
                    pool_window: 3,
                },
                ..ModelConfig::default()
            },
            steps: 300,
            lr: 0.1,
            fd_step: 1e-4,
            data: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub seed: u64,
    pub param_count: usize,
    pub lr: f64,
    /// Loss before each update.
    pub steps: Vec<TrainStep>,
    /// Loss after the last update.
    pub final_loss: LossBreakdown,
    /// Main-head accuracy on the training set with frozen statistics and
    /// the auxiliary head dropped.
    pub train_accuracy: f64,
}

impl TrainTrace {
    pub fn initial_total(&self) -> f64 {
        self.steps
            .first()
            .map_or(self.final_loss.total, |s| s.loss.total)
    }
}

fn check_limits(cfg: &ModelConfig, count: usize) -> Result<(), ModelError> {
    let over = |what: &str, got: usize, max: usize| {
        Err(ModelError::BudgetExceeded(format!(
            "{what} {got} exceeds the micro limit {max}"
        )))
    };
    if cfg.joints > MAX_JOINTS {
        return over("joints", cfg.joints, MAX_JOINTS);
    }
    if cfg.frames > MAX_FRAMES {
        return over("frames", cfg.frames, MAX_FRAMES);
    }
    if cfg.blocks() > MAX_BLOCKS {
        return over("blocks", cfg.blocks(), MAX_BLOCKS);
    }
    if let Some(&c) = cfg.channels.iter().find(|&&c| c > MAX_CHANNELS) {
        return over("channels", c, MAX_CHANNELS);
    }
    if cfg.classes > MAX_CLASSES {
        return over("classes", cfg.classes, MAX_CLASSES);
    }
    if count > MICRO_PARAM_LIMIT {
        return over("parameter count", count, MICRO_PARAM_LIMIT);
    }
    Ok(())
}

/// Class-separable sequences: each class scales a fixed joint pattern by a
/// slow temporal oscillation, plus uniform noise. Samples interleave classes.
pub fn synthetic_dataset(
    cfg: &ModelConfig,
    syn: &SyntheticConfig,
    seed: u64,
) -> Result<Vec<TrainSample>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, v, d) = (cfg.frames, cfg.joints, cfg.in_dims);
    let mut out = Vec::with_capacity(syn.per_class * cfg.classes);
    for _ in 0..syn.per_class {
        for c in 0..cfg.classes {
            let cf = c as f64;
            let mut data = Vec::with_capacity(t * v * d);
            for f in 0..t {
                let phase = std::f64::consts::TAU * f as f64 / t as f64 + cf;
                for j in 0..v {
                    for k in 0..d {
                        let pattern =
                            (1.3 * (cf + 1.0) * (j as f64 + 1.0) + 0.7 * k as f64 + cf).sin();
                        let noise = if syn.noise > 0.0 {
                            rng.gen_range(-syn.noise..=syn.noise)
                        } else {
                            0.0
                        };
                        data.push(pattern * (1.0 + 0.2 * phase.sin()) + noise);
                    }
                }
            }
            let sequence = SkeletonSequence::new(t, v, d, data)
                .map_err(|e| ModelError::InvalidConfig(e.to_string()))?
                .with_label(Some(c));
            out.push(TrainSample { sequence, label: c });
        }
    }
    Ok(out)
}

/// Templates from seeded pseudo-random joint embeddings, standing in for
/// text-derived ones in offline runs.
pub fn synthetic_templates(cfg: &ModelConfig, seed: u64) -> Result<ClassTemplateSet, ModelError> {
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e47_1a7e);
    let vectors = (0..cfg.classes * cfg.joints * dim)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let table = EmbeddingTable::new(cfg.classes, cfg.joints, dim, vectors, PromptId::P3)?;
    Ok(build_templates(&table)?)
}

fn loss_of_output(
    out: &ForwardOutput,
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &[TrainSample],
    templates: &ClassTemplateSet,
) -> Result<LossBreakdown, ModelError> {
    let n = data.len() as f64;
    let mut primary = 0.0;
    let mut aux = 0.0;
    for ((logits, theta), sample) in out.logits.iter().zip(&out.theta).zip(data) {
        if sample.label >= cfg.classes {
            return Err(ModelError::DimensionMismatch(format!(
                "label {} out of range for {} classes",
                sample.label, cfg.classes
            )));
        }
        primary += aux_loss(logits, sample.label);
        let z = pcac_logits(theta, templates, &params.aux_w, params.aux_b)?;
        aux += aux_loss(&z, sample.label);
    }
    Ok(total_loss(primary / n, aux / n, cfg.lambda))
}

/// Mean main and auxiliary cross-entropy over `data`.
pub fn batch_loss(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &[TrainSample],
    templates: &ClassTemplateSet,
    mode: BnMode,
) -> Result<(LossBreakdown, Vec<BnStats>), ModelError> {
    let batch: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let out = forward_batch(params, cfg, &batch, mode)?;
    let loss = loss_of_output(&out, params, cfg, data, templates)?;
    Ok((loss, out.bn_stats))
}

/// `(f(x + h) − f(x − h)) / 2h`
pub fn central_difference<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    x: f64,
    h: f64,
) -> Result<f64, E> {
    let plus = f(x + h)?;
    let minus = f(x - h)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Central-difference gradient of `loss` with respect to every trainable
/// coordinate, evaluated in parallel. `loss` also receives the index of the
/// perturbed coordinate.
pub fn fd_gradient<F>(params: &ModelParams, h: f64, loss: F) -> Result<Vec<f64>, ModelError>
where
    F: Fn(&ModelParams, usize) -> Result<f64, ModelError> + Sync,
{
    (0..params.count())
        .into_par_iter()
        .map_init(
            || params.clone(),
            |p, i| {
                let x0 = p.coordinate(i);
                let g = central_difference(
                    |x| {
                        p.set_coordinate(i, x);
                        loss(p, i)
                    },
                    x0,
                    h,
                );
                p.set_coordinate(i, x0);
                g
            },
        )
        .collect()
}

/// Batch-statistics loss at `params` with its central-difference gradient.
pub fn loss_gradient(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &[TrainSample],
    templates: &ClassTemplateSet,
    h: f64,
) -> Result<(LossBreakdown, Vec<BnStats>, Vec<f64>), ModelError> {
    let batch: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let (out, trace) = forward_traced(params, cfg, &batch, BnMode::Batch)?;
    let loss = loss_of_output(&out, params, cfg, data, templates)?;
    // A perturbed coordinate only affects its own stage and later ones.
    let bounds = params.stage_bounds();
    let grad = fd_gradient(params, h, |p, i| {
        let stage = bounds.partition_point(|&end| end <= i);
        let out = forward_resume(p, cfg, &batch, BnMode::Batch, &trace, stage)?;
        Ok(loss_of_output(&out, p, cfg, data, templates)?.total)
    })?;
    Ok((loss, out.bn_stats, grad))
}

fn update_running(params: &mut ModelParams, stats: &[BnStats]) {
    for (bn, s) in params.bn_layers_mut().into_iter().zip(stats) {
        for i in 0..bn.channels() {
            bn.running_mean[i] = (1.0 - BN_MOMENTUM) * bn.running_mean[i] + BN_MOMENTUM * s.mean[i];
            bn.running_var[i] = (1.0 - BN_MOMENTUM) * bn.running_var[i] + BN_MOMENTUM * s.var[i];
        }
    }
}

/// Gradient descent on the multi-task loss with finite-difference
/// gradients. Batch statistics drive every loss evaluation; running
/// statistics are refreshed once per step.
pub fn micro_train(
    cfg: &MicroTrainConfig,
    data: &[TrainSample],
    templates: &ClassTemplateSet,
    seed: u64,
) -> Result<(TrainTrace, ModelParams), ModelError> {
    let model = &cfg.model;
    let mut params = init_params(model, seed)?;
    check_limits(model, params.count())?;
    if data.is_empty() {
        return Err(ModelError::DimensionMismatch("empty training set".into()));
    }
    if cfg.fd_step.is_nan() || cfg.fd_step <= 0.0 || !cfg.lr.is_finite() {
        return Err(ModelError::InvalidConfig(
            "fd_step must be positive and lr finite".into(),
        ));
    }
    let mut steps = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, stats, grad) = loss_gradient(&params, model, data, templates, cfg.fd_step)?;
        steps.push(TrainStep { step, loss });
        let mut flat = params.to_flat();
        for (x, g) in flat.iter_mut().zip(&grad) {
            *x -= cfg.lr * g;
        }
        params.set_flat(&flat)?;
        update_running(&mut params, &stats);
    }
    let (final_loss, stats) = batch_loss(&params, model, data, templates, BnMode::Batch)?;
    update_running(&mut params, &stats);

    let batch: Vec<&SkeletonSequence> = data.iter().map(|s| &s.sequence).collect();
    let eval = forward_batch(&params, model, &batch, BnMode::Frozen)?;
    let correct = eval
        .logits
        .iter()
        .zip(data)
        .filter(|(row, s)| argmax(row) == s.label)
        .count();

    Ok((
        TrainTrace {
            seed,
            param_count: params.count(),
            lr: cfg.lr,
            steps,
            final_loss,
            train_accuracy: correct as f64 / data.len() as f64,
        },
        params,
    ))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
