use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::sinusoidal_pe;
use super::{ModelConfig, ModelError, PeKind};
use crate::bone_select::BoneMatrix;
use crate::linalg::Matrix;
use crate::mha_gc::{normalized_adjacency, AttentionParams, DiffusionConfig};

/// Per-channel affine normalization. The running statistics are state, not
/// trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Pointwise channel mixing followed by a depthwise dilated temporal
/// convolution with zero "same" padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalBranch {
    /// C × C
    pub pointwise: Matrix,
    pub pointwise_bias: Vec<f64>,
    /// C × kernel
    pub depthwise: Matrix,
    pub depthwise_bias: Vec<f64>,
    pub dilation: usize,
}

/// Dilated branches, a max-pool branch and a 1×1 skip, summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsTcParams {
    pub branches: Vec<TemporalBranch>,
    pub pool_pointwise: Matrix,
    pub pool_bias: Vec<f64>,
    pub pool_window: usize,
    pub skip: Matrix,
    pub skip_bias: Vec<f64>,
}

impl MsTcParams {
    pub fn channels(&self) -> usize {
        self.skip.cols()
    }

    pub fn receptive_field(&self) -> usize {
        self.branches
            .iter()
            .map(|b| b.dilation * (b.depthwise.cols() - 1) + 1)
            .chain([self.pool_window])
            .max()
            .unwrap_or(1)
    }
}

/// Strided 1×1 residual projection with its own normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub attention: AttentionParams,
    pub diffusion: DiffusionConfig,
    /// C_in × C_out
    pub w4: Matrix,
    pub bn_spatial: BatchNorm,
    pub temporal: MsTcParams,
    pub bn_temporal: BatchNorm,
    pub residual: Option<Projection>,
    pub stride: usize,
}

impl BlockParams {
    pub fn in_channels(&self) -> usize {
        self.w4.rows()
    }

    pub fn out_channels(&self) -> usize {
        self.w4.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// d × C1
    pub w0: Matrix,
    /// Fixed positional encoding, V × C1.
    pub pe: Matrix,
    pub blocks: Vec<BlockParams>,
    /// C_last × M
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
    /// Auxiliary head reducing the tapped channels to one value per joint.
    pub aux_w: Vec<f64>,
    pub aux_b: f64,
}

impl BatchNorm {
    fn slices<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    fn slices_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

impl BlockParams {
    fn slices<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        let a = &self.attention;
        out.extend([
            a.shared.as_slice(),
            std::slice::from_ref(&a.gamma),
            a.w_q.as_slice(),
            a.w_k.as_slice(),
            &a.w3,
            self.w4.as_slice(),
        ]);
        self.bn_spatial.slices(out);
        let t = &self.temporal;
        for b in &t.branches {
            out.extend([
                b.pointwise.as_slice(),
                &b.pointwise_bias,
                b.depthwise.as_slice(),
                &b.depthwise_bias,
            ]);
        }
        out.extend([
            t.pool_pointwise.as_slice(),
            &t.pool_bias,
            t.skip.as_slice(),
            &t.skip_bias,
        ]);
        self.bn_temporal.slices(out);
        if let Some(p) = &self.residual {
            out.extend([p.weight.as_slice(), &p.bias]);
            p.bn.slices(out);
        }
    }

    fn slices_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        let a = &mut self.attention;
        out.extend([
            a.shared.as_mut_slice(),
            std::slice::from_mut(&mut a.gamma),
            a.w_q.as_mut_slice(),
            a.w_k.as_mut_slice(),
            &mut a.w3,
            self.w4.as_mut_slice(),
        ]);
        self.bn_spatial.slices_mut(out);
        let t = &mut self.temporal;
        for b in &mut t.branches {
            out.extend([
                b.pointwise.as_mut_slice(),
                &mut b.pointwise_bias,
                b.depthwise.as_mut_slice(),
                &mut b.depthwise_bias,
            ]);
        }
        out.extend([
            t.pool_pointwise.as_mut_slice(),
            &mut t.pool_bias,
            t.skip.as_mut_slice(),
            &mut t.skip_bias,
        ]);
        self.bn_temporal.slices_mut(out);
        if let Some(p) = &mut self.residual {
            out.extend([p.weight.as_mut_slice(), &mut p.bias]);
            p.bn.slices_mut(out);
        }
    }
}

impl BlockParams {
    /// Trainable counts of the spatial, temporal and residual stages.
    fn stage_lens(&self) -> [usize; 3] {
        let mut all = Vec::new();
        self.slices(&mut all);
        let total: usize = all.iter().map(|s| s.len()).sum();
        let a = &self.attention;
        let spatial = a.shared.as_slice().len()
            + 1
            + a.w_q.as_slice().len()
            + a.w_k.as_slice().len()
            + a.w3.len()
            + self.w4.as_slice().len()
            + 2 * self.bn_spatial.gamma.len();
        let residual = self.residual.as_ref().map_or(0, |p| {
            p.weight.as_slice().len() + p.bias.len() + 2 * p.bn.gamma.len()
        });
        [spatial, total - spatial - residual, residual]
    }
}

impl ModelParams {
    /// Trainable buffers in a fixed order.
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.w0.as_slice()];
        for b in &self.blocks {
            b.slices(&mut out);
        }
        out.extend([
            self.head_w.as_slice(),
            &self.head_b,
            &self.aux_w,
            std::slice::from_ref(&self.aux_b),
        ]);
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.w0.as_mut_slice()];
        for b in &mut self.blocks {
            b.slices_mut(&mut out);
        }
        out.extend([
            self.head_w.as_mut_slice(),
            &mut self.head_b,
            &mut self.aux_w,
            std::slice::from_mut(&mut self.aux_b),
        ]);
        out
    }

    /// Number of trainable scalars.
    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Trainable scalars of the main branch only (auxiliary head excluded).
    pub fn count_main(&self) -> usize {
        self.count() - self.aux_w.len() - 1
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.count() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.count()
            )));
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Sets trainable coordinate `index` to `value`.
    ///
    /// # Panics
    /// If `index >= self.count()`.
    pub fn set_coordinate(&mut self, index: usize, value: f64) {
        let mut i = index;
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        let mut i = index;
        for s in self.slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Exclusive end offset of each forward stage's coordinates: the
    /// embedding, then three stages per block (spatial, temporal, residual),
    /// then both heads.
    pub(crate) fn stage_bounds(&self) -> Vec<usize> {
        let mut bounds = vec![self.w0.as_slice().len()];
        for b in &self.blocks {
            for len in b.stage_lens() {
                bounds.push(bounds.last().unwrap() + len);
            }
        }
        bounds.push(self.count());
        bounds
    }

    /// Normalization layers in forward order: per block spatial, temporal,
    /// then the residual projection when present.
    pub fn bn_layers_mut(&mut self) -> Vec<&mut BatchNorm> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.bn_spatial);
            out.push(&mut b.bn_temporal);
            if let Some(p) = &mut b.residual {
                out.push(&mut p.bn);
            }
        }
        out
    }

    /// FNV-1a over the bit patterns of every trainable scalar and running
    /// statistic.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for byte in x.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for s in self.slices() {
            s.iter().copied().for_each(&mut feed);
        }
        for b in &self.blocks {
            let bns = [
                Some(&b.bn_spatial),
                Some(&b.bn_temporal),
                b.residual.as_ref().map(|p| &p.bn),
            ];
            for bn in bns.into_iter().flatten() {
                bn.running_mean
                    .iter()
                    .chain(&bn.running_var)
                    .copied()
                    .for_each(&mut feed);
            }
        }
        h
    }
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, n: usize, fan_in: usize) -> Vec<f64> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize, fan_in: usize) -> Matrix {
        Matrix::from_vec(rows, cols, self.uniform(rows * cols, fan_in)).expect("sized")
    }
}

fn shared_topology(joints: usize) -> Matrix {
    let bones = if joints == 25 {
        BoneMatrix::physical_ntu()
    } else {
        BoneMatrix::chain(joints)
    };
    normalized_adjacency(&bones)
}

/// Deterministic initialization: weights uniform in `±1/sqrt(fan_in)`,
/// biases zero, normalization at identity, shared topology at the normalized
/// physical adjacency.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let v = cfg.joints;
    let c1 = cfg.channels[0];
    let w0 = init.matrix(cfg.in_dims, c1, cfg.in_dims);
    let pe = match cfg.pe_kind {
        PeKind::Sinusoidal => sinusoidal_pe(v, c1),
        PeKind::Disabled => Matrix::zeros(v, c1),
    };
    let shared = shared_topology(v);
    let tc = &cfg.temporal;

    let mut blocks = Vec::with_capacity(cfg.blocks());
    let mut c_in = c1;
    for (b, (&c_out, &stride)) in cfg.channels.iter().zip(&cfg.strides).enumerate() {
        let r = (c_in / 8).max(1);
        let attention = AttentionParams {
            shared: shared.clone(),
            gamma: cfg.gamma_init,
            w_q: init.matrix(c_in, r, c_in),
            w_k: init.matrix(c_in, r, c_in),
            w3: init.uniform(r, r),
        };
        let w4 = init.matrix(c_in, c_out, c_in);
        let branches = tc
            .dilations
            .iter()
            .map(|&dilation| TemporalBranch {
                pointwise: init.matrix(c_out, c_out, c_out),
                pointwise_bias: vec![0.0; c_out],
                depthwise: init.matrix(c_out, tc.kernel, tc.kernel),
                depthwise_bias: vec![0.0; c_out],
                dilation,
            })
            .collect();
        let temporal = MsTcParams {
            branches,
            pool_pointwise: init.matrix(c_out, c_out, c_out),
            pool_bias: vec![0.0; c_out],
            pool_window: tc.pool_window,
            skip: init.matrix(c_out, c_out, c_out),
            skip_bias: vec![0.0; c_out],
        };
        let residual = (c_in != c_out || stride != 1).then(|| Projection {
            weight: init.matrix(c_in, c_out, c_in),
            bias: vec![0.0; c_out],
            bn: BatchNorm::new(c_out),
        });
        blocks.push(BlockParams {
            attention,
            diffusion: DiffusionConfig::exact(cfg.beta, cfg.hops_for(b)),
            w4,
            bn_spatial: BatchNorm::new(c_out),
            temporal,
            bn_temporal: BatchNorm::new(c_out),
            residual,
            stride,
        });
        c_in = c_out;
    }

    let c_last = c_in;
    let tap_c = cfg.channels[cfg.aux_tap - 1];
    Ok(ModelParams {
        w0,
        pe,
        blocks,
        head_w: init.matrix(c_last, cfg.classes, c_last),
        head_b: vec![0.0; cfg.classes],
        aux_w: init.uniform(tap_c, tap_c),
        aux_b: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TemporalConfig;

    fn tiny() -> ModelConfig {
        ModelConfig {
            joints: 4,
            classes: 3,
            frames: 6,
            channels: vec![4, 6],
            strides: vec![1, 2],
            temporal: TemporalConfig {
                kernel: 3,
                dilations: vec![1, 2],
                pool_window: 3,
            },
            aux_tap: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = init_params(&tiny(), 3).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.count());
        let mut q = init_params(&tiny(), 4).unwrap();
        assert_ne!(q.checksum(), p.checksum());
        q.set_flat(&flat).unwrap();
        assert_eq!(q, p);
        q.set_coordinate(7, 42.0);
        assert_eq!(q.coordinate(7), 42.0);
        assert_eq!(q.to_flat()[7], 42.0);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = init_params(&tiny(), 9).unwrap();
        let b = init_params(&tiny(), 9).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
    }

    #[test]
    fn projection_only_where_needed() {
        let mut p = init_params(&tiny(), 1).unwrap();
        assert!(p.blocks[0].residual.is_none());
        assert!(p.blocks[1].residual.is_some());
        assert_eq!(p.bn_layers_mut().len(), 5);
    }

    #[test]
    fn hand_count_tiny() {
        let p = init_params(&tiny(), 1).unwrap();
        // Attention: 16 + 1 + 2·4·1 + 1; W4; BN; two branches (C²+C+3C+C); pool; skip; BN.
        let block = |ci: usize, co: usize| {
            let r = (ci / 8).max(1);
            16 + 1
                + 2 * ci * r
                + r
                + ci * co
                + 2 * co
                + 2 * (co * co + co + 3 * co + co)
                + 2 * (co * co + co)
                + 2 * co
        };
        let proj = 4 * 6 + 6 + 12;
        let want = 3 * 4 + block(4, 4) + block(4, 6) + proj + 6 * 3 + 3 + 6 + 1;
        assert_eq!(p.count(), want);
    }
}
