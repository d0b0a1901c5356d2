use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{batch_norm, embed_input, ms_tc_forward, BnStats, FeatureMap};
use super::params::{BlockParams, ModelParams};
use super::{ModelConfig, ModelError};
use crate::linalg::{matmul_into, Matrix};
use crate::mha_gc::{multi_hop_exact, one_hop_attention};
use crate::skeleton_io::SkeletonSequence;

/// Source of the normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics (evaluation).
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// One row of `M` logits per sample.
    pub logits: Vec<Vec<f64>>,
    /// Tapped block output pooled over frames, `V × C` per sample.
    pub theta: Vec<Matrix>,
    /// Batch statistics in normalization-layer order; empty when frozen.
    pub bn_stats: Vec<BnStats>,
}

fn check_input(seq: &SkeletonSequence, cfg: &ModelConfig) -> Result<(), ModelError> {
    let want = (cfg.frames, cfg.joints, cfg.in_dims);
    let got = (seq.frames(), seq.joints(), seq.dims());
    if got != want {
        return Err(ModelError::DimensionMismatch(format!(
            "sequence is {}x{}x{}, model expects {}x{}x{}",
            got.0, got.1, got.2, want.0, want.1, want.2
        )));
    }
    Ok(())
}

/// Attention, multi-hop diffusion and `ReLU(𝒜̄ F_t W4)` per frame.
fn spatial(f: &FeatureMap, block: &BlockParams) -> Result<FeatureMap, ModelError> {
    let stack = one_hop_attention(&f.pooled_over_time(), &block.attention)?;
    let diffused = multi_hop_exact(&stack.a_bar, &block.diffusion)?;
    let mut g = f.pointwise(&block.w4, &vec![0.0; block.out_channels()], 1);
    let (v, c) = (g.joints(), g.channels());
    let mut tmp = vec![0.0; v * c];
    for frame in g.data_mut().chunks_exact_mut(v * c) {
        matmul_into(diffused.as_slice(), frame, &mut tmp, v, v, c);
        for (o, x) in frame.iter_mut().zip(&tmp) {
            *o = x.max(0.0);
        }
    }
    Ok(g)
}

fn map_batch<T, U, F>(items: &[T], parallel: bool, f: F) -> Result<Vec<U>, ModelError>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U, ModelError> + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Where a block starts: from its input, or from a checkpoint after its
/// spatial (phase 1) or temporal (phase 2) stage.
enum Entry {
    Input,
    Phase(usize, Vec<FeatureMap>),
}

fn run_block(
    x: Vec<FeatureMap>,
    entry: Entry,
    block: &BlockParams,
    mode: BnMode,
    parallel: bool,
    stats: &mut Vec<BnStats>,
    mut record: Option<&mut Trace>,
) -> Result<Vec<FeatureMap>, ModelError> {
    let (phase, mut h) = match entry {
        Entry::Input => (0, Vec::new()),
        Entry::Phase(p, h) => (p, h),
    };
    let mut mark = |h: &[FeatureMap], stats: &[BnStats]| {
        if let Some(t) = record.as_deref_mut() {
            t.points.push(Checkpoint {
                input: x.clone(),
                partial: h.to_vec(),
                stats_len: stats.len(),
            });
        }
    };
    if phase == 0 {
        mark(&h, stats);
        h = map_batch(&x, parallel, |f| spatial(f, block))?;
        stats.extend(batch_norm(&mut h, &block.bn_spatial, mode)?);
    }
    if phase <= 1 {
        mark(&h, stats);
        h = map_batch(&h, parallel, |f| {
            ms_tc_forward(f, &block.temporal, block.stride)
        })?;
        stats.extend(batch_norm(&mut h, &block.bn_temporal, mode)?);
    }
    mark(&h, stats);

    let residual = match &block.residual {
        Some(p) => {
            let mut r = map_batch(&x, parallel, |f| {
                Ok(f.pointwise(&p.weight, &p.bias, block.stride))
            })?;
            stats.extend(batch_norm(&mut r, &p.bn, mode)?);
            r
        }
        None => {
            if block.stride != 1 || block.in_channels() != block.out_channels() {
                return Err(ModelError::DimensionMismatch(
                    "identity residual needs stride 1 and equal channels".into(),
                ));
            }
            x
        }
    };
    for (out, r) in h.iter_mut().zip(&residual) {
        for (o, x) in out.data_mut().iter_mut().zip(r.data()) {
            *o = (*o + x).max(0.0);
        }
    }
    Ok(h)
}

fn head(params: &ModelParams, x: &[FeatureMap]) -> Result<Vec<Vec<f64>>, ModelError> {
    let c = params.head_w.rows();
    let m = params.head_w.cols();
    x.iter()
        .map(|f| {
            let pooled = f.global_mean();
            if pooled.len() != c {
                return Err(ModelError::DimensionMismatch(format!(
                    "head expects {c} channels, got {}",
                    pooled.len()
                )));
            }
            let mut out = vec![0.0; m];
            matmul_into(&pooled, params.head_w.as_slice(), &mut out, 1, c, m);
            for (o, b) in out.iter_mut().zip(&params.head_b) {
                *o += b;
            }
            Ok(out)
        })
        .collect()
}

fn check_batch(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&SkeletonSequence],
) -> Result<(), ModelError> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(ModelError::DimensionMismatch("empty batch".into()));
    }
    if params.blocks.len() != cfg.blocks() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} parameter blocks for a {}-block configuration",
            params.blocks.len(),
            cfg.blocks()
        )));
    }
    for seq in batch {
        check_input(seq, cfg)?;
    }
    Ok(())
}

/// Activations at one stage boundary.
#[derive(Debug, Clone)]
struct Checkpoint {
    /// Input of the enclosing block, or of the head for the last checkpoint.
    input: Vec<FeatureMap>,
    /// Output of the block's completed stages; empty at a block start.
    partial: Vec<FeatureMap>,
    stats_len: usize,
}

/// Activations recorded at one parameter setting, from which a forward pass
/// can resume after a change confined to later stages.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Three checkpoints per block, then the head input.
    points: Vec<Checkpoint>,
    stats: Vec<BnStats>,
    theta: Vec<Matrix>,
}

struct Run {
    logits: Vec<Vec<f64>>,
    theta: Vec<Matrix>,
    stats: Vec<BnStats>,
}

#[allow(clippy::too_many_arguments)]
fn run_from(
    params: &ModelParams,
    cfg: &ModelConfig,
    start: usize,
    entry: Entry,
    x: Vec<FeatureMap>,
    theta: Vec<Matrix>,
    stats: Vec<BnStats>,
    mode: BnMode,
    parallel: bool,
    mut record: Option<&mut Trace>,
) -> Result<Run, ModelError> {
    let (mut x, mut theta, mut stats) = (x, theta, stats);
    let mut entry = Some(entry);
    for (b, block) in params.blocks.iter().enumerate().skip(start) {
        let e = entry.take().unwrap_or(Entry::Input);
        x = run_block(
            x,
            e,
            block,
            mode,
            parallel,
            &mut stats,
            record.as_deref_mut(),
        )?;
        if b + 1 == cfg.aux_tap {
            theta = x.iter().map(FeatureMap::pooled_over_time).collect();
        }
    }
    if let Some(t) = record {
        t.points.push(Checkpoint {
            input: x.clone(),
            partial: Vec::new(),
            stats_len: stats.len(),
        });
        t.stats = stats.clone();
        t.theta = theta.clone();
    }
    Ok(Run {
        logits: head(params, &x)?,
        theta,
        stats,
    })
}

fn embed_batch(
    params: &ModelParams,
    batch: &[&SkeletonSequence],
    parallel: bool,
) -> Result<Vec<FeatureMap>, ModelError> {
    map_batch(batch, parallel, |s| embed_input(s, &params.w0, &params.pe))
}

/// Runs the encoder and main head over a batch.
pub fn forward_batch(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&SkeletonSequence],
    mode: BnMode,
) -> Result<ForwardOutput, ModelError> {
    check_batch(params, cfg, batch)?;
    let x = embed_batch(params, batch, true)?;
    let run = run_from(
        params,
        cfg,
        0,
        Entry::Input,
        x,
        Vec::new(),
        Vec::new(),
        mode,
        true,
        None,
    )?;
    Ok(run.into())
}

impl From<Run> for ForwardOutput {
    fn from(run: Run) -> Self {
        ForwardOutput {
            logits: run.logits,
            theta: run.theta,
            bn_stats: run.stats,
        }
    }
}

/// Sequential forward that also records the activations at every stage
/// boundary.
pub(crate) fn forward_traced(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&SkeletonSequence],
    mode: BnMode,
) -> Result<(ForwardOutput, Trace), ModelError> {
    check_batch(params, cfg, batch)?;
    let x = embed_batch(params, batch, false)?;
    let mut trace = Trace {
        points: Vec::new(),
        stats: Vec::new(),
        theta: Vec::new(),
    };
    let run = run_from(
        params,
        cfg,
        0,
        Entry::Input,
        x,
        Vec::new(),
        Vec::new(),
        mode,
        false,
        Some(&mut trace),
    )?;
    Ok((run.into(), trace))
}

/// Sequential forward resuming at `stage` from `trace`. Stage 0 re-embeds,
/// stage `1 + 3b + p` enters block `b` at phase `p`, and the last stage
/// reruns only the head. `params` may differ from the traced ones only in
/// that stage or later.
pub(crate) fn forward_resume(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&SkeletonSequence],
    mode: BnMode,
    trace: &Trace,
    stage: usize,
) -> Result<ForwardOutput, ModelError> {
    if stage == 0 {
        let x = embed_batch(params, batch, false)?;
        let run = run_from(
            params,
            cfg,
            0,
            Entry::Input,
            x,
            Vec::new(),
            Vec::new(),
            mode,
            false,
            None,
        )?;
        return Ok(run.into());
    }
    let point = &trace.points[stage - 1];
    let (block, phase) = ((stage - 1) / 3, (stage - 1) % 3);
    // The tap lies strictly before `block` exactly when `block >= aux_tap`.
    let theta = if block >= cfg.aux_tap {
        trace.theta.clone()
    } else {
        Vec::new()
    };
    let stats = trace.stats[..point.stats_len].to_vec();
    let entry = if phase == 0 {
        Entry::Input
    } else {
        Entry::Phase(phase, point.partial.clone())
    };
    let run = run_from(
        params,
        cfg,
        block,
        entry,
        point.input.clone(),
        theta,
        stats,
        mode,
        false,
        None,
    )?;
    Ok(run.into())
}

/// Evaluation-mode forward of a single sequence: main logits and the tapped
/// features.
pub fn model_forward(
    seq: &SkeletonSequence,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(Vec<f64>, Matrix), ModelError> {
    let mut out = forward_batch(params, cfg, &[seq], BnMode::Frozen)?;
    Ok((out.logits.remove(0), out.theta.remove(0)))
}
