use serde::{Deserialize, Serialize};

use super::forward::BnMode;
use super::params::{BatchNorm, MsTcParams};
use super::ModelError;
use crate::linalg::{matmul_acc, matmul_into, Matrix};
use crate::prior_graphs::ClassTemplateSet;
use crate::skeleton_io::SkeletonSequence;

pub(crate) const BN_EPS: f64 = 1e-5;

/// A `T × V × C` activation tensor, row-major in (frame, joint, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    frames: usize,
    joints: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(frames: usize, joints: usize, channels: usize) -> Self {
        Self {
            frames,
            joints,
            channels,
            data: vec![0.0; frames * joints * channels],
        }
    }

    pub fn from_vec(
        frames: usize,
        joints: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if data.len() != frames * joints * channels {
            return Err(ModelError::DimensionMismatch(format!(
                "{} values for a {frames}x{joints}x{channels} feature map",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            joints,
            channels,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, t: usize, v: usize, c: usize) -> f64 {
        self.data[(t * self.joints + v) * self.channels + c]
    }

    /// Row-major `V × C` slice of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.joints * self.channels;
        &self.data[t * n..(t + 1) * n]
    }

    /// Mean over frames, `V × C`.
    pub fn pooled_over_time(&self) -> Matrix {
        let n = self.joints * self.channels;
        let mut out = vec![0.0; n];
        for t in 0..self.frames {
            for (o, x) in out.iter_mut().zip(self.frame(t)) {
                *o += x;
            }
        }
        let inv = 1.0 / self.frames as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        Matrix::from_vec(self.joints, self.channels, out).expect("sized")
    }

    /// Mean over frames and joints, one value per channel.
    pub fn global_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        for row in self.data.chunks_exact(self.channels) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        let inv = 1.0 / (self.frames * self.joints) as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        out
    }

    /// `(T·V × C) · W + b` on frames `0, s, 2s, …`.
    pub(crate) fn pointwise(&self, w: &Matrix, bias: &[f64], stride: usize) -> FeatureMap {
        let frames = (self.frames - 1) / stride + 1;
        let (v, ci, co) = (self.joints, self.channels, w.cols());
        // Start from the bias and accumulate the product onto it.
        let data = tiled(bias, frames * v);
        let mut out = FeatureMap {
            frames,
            joints: v,
            channels: co,
            data,
        };
        if stride == 1 {
            matmul_acc(&self.data, w.as_slice(), &mut out.data, frames * v, ci, co);
        } else {
            for t in 0..frames {
                let dst = &mut out.data[t * v * co..(t + 1) * v * co];
                matmul_acc(self.frame(t * stride), w.as_slice(), dst, v, ci, co);
            }
        }
        out
    }
}

/// `pattern` repeated `times` times.
fn tiled(pattern: &[f64], times: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pattern.len() * times);
    for _ in 0..times {
        out.extend_from_slice(pattern);
    }
    out
}

/// Fixed sinusoidal encoding of joint index `v` over `C` channels:
/// `sin(v / 10000^{2i/C})` on even channels, `cos` on odd ones.
pub fn sinusoidal_pe(joints: usize, channels: usize) -> Matrix {
    let mut pe = Matrix::zeros(joints, channels);
    for v in 0..joints {
        for c in 0..channels {
            let i = (c / 2) as f64;
            let angle = v as f64 / 10000_f64.powf(2.0 * i / channels as f64);
            pe[(v, c)] = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// `F0[t] = X[t] · W0 + PE` for every frame.
pub fn embed_input(
    seq: &SkeletonSequence,
    w0: &Matrix,
    pe: &Matrix,
) -> Result<FeatureMap, ModelError> {
    let (t, v, d) = (seq.frames(), seq.joints(), seq.dims());
    let c = w0.cols();
    if w0.rows() != d {
        return Err(ModelError::DimensionMismatch(format!(
            "embedding expects {} input dims, sequence has {d}",
            w0.rows()
        )));
    }
    if pe.shape() != (v, c) {
        return Err(ModelError::DimensionMismatch(format!(
            "positional encoding is {}x{}, expected {v}x{c}",
            pe.rows(),
            pe.cols()
        )));
    }
    let mut out = FeatureMap::zeros(t, v, c);
    let n = v * c;
    for f in 0..t {
        let dst = &mut out.data[f * n..(f + 1) * n];
        matmul_into(
            &seq.data()[f * v * d..(f + 1) * v * d],
            w0.as_slice(),
            dst,
            v,
            d,
            c,
        );
        for (o, p) in dst.iter_mut().zip(pe.as_slice()) {
            *o += p;
        }
    }
    Ok(out)
}

/// Multi-scale temporal convolution with output length `(T − 1) / stride + 1`.
pub fn ms_tc_forward(
    f: &FeatureMap,
    params: &MsTcParams,
    stride: usize,
) -> Result<FeatureMap, ModelError> {
    let c = params.channels();
    if f.channels() != c {
        return Err(ModelError::DimensionMismatch(format!(
            "temporal block expects {c} channels, got {}",
            f.channels()
        )));
    }
    if stride == 0 {
        return Err(ModelError::InvalidConfig("stride must be >= 1".into()));
    }
    let required = params.receptive_field();
    if f.frames() < required {
        return Err(ModelError::TooShort {
            frames: f.frames(),
            required,
        });
    }
    let (t_in, v) = (f.frames() as isize, f.joints());
    let t_out = (f.frames() - 1) / stride + 1;

    // All pointwise maps in one product: dilated branches, pool, skip.
    let nb = params.branches.len();
    let (pool, skip) = (nb, nb + 1);
    let width = (nb + 2) * c;
    let mut w_cat = Matrix::zeros(c, width);
    let mut b_cat = vec![0.0; width];
    let maps = params
        .branches
        .iter()
        .map(|b| (&b.pointwise, &b.pointwise_bias))
        .chain([
            (&params.pool_pointwise, &params.pool_bias),
            (&params.skip, &params.skip_bias),
        ]);
    for (slot, (w, b)) in maps.enumerate() {
        for r in 0..c {
            w_cat.row_mut(r)[slot * c..(slot + 1) * c].copy_from_slice(w.row(r));
        }
        b_cat[slot * c..(slot + 1) * c].copy_from_slice(b);
    }
    let h = f.pointwise(&w_cat, &b_cat, 1);

    // Slot-major copy so every stage below works on whole `V × C` frames.
    let row = v * c;
    let frames = f.frames();
    let mut slots = Vec::with_capacity((nb + 2) * frames * row);
    for slot in 0..nb + 2 {
        for cell in h.data.chunks_exact(width) {
            slots.extend_from_slice(&cell[slot * c..(slot + 1) * c]);
        }
    }
    let frame_of = |slot: usize, t: usize| {
        let base = (slot * frames + t) * row;
        &slots[base..base + row]
    };

    // Kernel taps and biases tiled over joints.
    let tile = |per_channel: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
        let one: Vec<f64> = per_channel.collect();
        tiled(&one, v)
    };
    let taps: Vec<Vec<Vec<f64>>> = params
        .branches
        .iter()
        .map(|br| {
            (0..br.depthwise.cols())
                .map(|tap| tile(&mut (0..c).map(|ch| br.depthwise[(ch, tap)])))
                .collect()
        })
        .collect();
    let biases: Vec<Vec<f64>> = params
        .branches
        .iter()
        .map(|br| tile(&mut br.depthwise_bias.iter().copied()))
        .collect();
    let half_pool = (params.pool_window / 2) as isize;

    let mut data = Vec::with_capacity(t_out * row);
    let mut pooled = vec![0.0; row];
    for to in 0..t_out {
        let centre = (to * stride) as isize;
        data.extend_from_slice(frame_of(skip, centre as usize));
        let dst = &mut data[to * row..];
        for (b, br) in params.branches.iter().enumerate() {
            let half = (taps[b].len() / 2) as isize;
            for (o, bias) in dst.iter_mut().zip(&biases[b]) {
                *o += bias;
            }
            for (tap, w) in taps[b].iter().enumerate() {
                let ti = centre + (tap as isize - half) * br.dilation as isize;
                if !(0..t_in).contains(&ti) {
                    continue;
                }
                for ((o, x), wk) in dst.iter_mut().zip(frame_of(b, ti as usize)).zip(w) {
                    *o += wk * x;
                }
            }
        }
        let lo = (centre - half_pool).max(0) as usize;
        let hi = (centre + half_pool).min(t_in - 1) as usize;
        pooled.copy_from_slice(frame_of(pool, lo));
        for ti in lo + 1..=hi {
            for (m, x) in pooled.iter_mut().zip(frame_of(pool, ti)) {
                *m = m.max(*x);
            }
        }
        for (o, m) in dst.iter_mut().zip(&pooled) {
            *o += m;
        }
    }
    let out = FeatureMap {
        frames: t_out,
        joints: v,
        channels: c,
        data,
    };
    Ok(out)
}

/// Per-channel statistics over batch, frames and joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    /// Population variance.
    pub var: Vec<f64>,
}

/// Normalizes the batch in place. Returns the batch statistics in
/// [`BnMode::Batch`] mode.
pub fn batch_norm(
    maps: &mut [FeatureMap],
    bn: &BatchNorm,
    mode: BnMode,
) -> Result<Option<BnStats>, ModelError> {
    let c = bn.channels();
    if let Some(m) = maps.iter().find(|m| m.channels() != c) {
        return Err(ModelError::DimensionMismatch(format!(
            "normalization over {c} channels, got {}",
            m.channels()
        )));
    }
    let stats = match mode {
        BnMode::Frozen => None,
        BnMode::Batch => {
            let mut mean = vec![0.0; c];
            let mut count = 0usize;
            for m in maps.iter() {
                for row in m.data.chunks_exact(c) {
                    for (s, x) in mean.iter_mut().zip(row) {
                        *s += x;
                    }
                }
                count += m.frames() * m.joints();
            }
            let inv = 1.0 / count.max(1) as f64;
            mean.iter_mut().for_each(|x| *x *= inv);
            let mut var = vec![0.0; c];
            for m in maps.iter() {
                for row in m.data.chunks_exact(c) {
                    for ((s, x), mu) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (x - mu) * (x - mu);
                    }
                }
            }
            var.iter_mut().for_each(|x| *x *= inv);
            Some(BnStats { mean, var })
        }
    };
    let (mean, var) = match &stats {
        Some(s) => (&s.mean, &s.var),
        None => (&bn.running_mean, &bn.running_var),
    };
    let scale: Vec<f64> = (0..c)
        .map(|i| bn.gamma[i] / (var[i] + BN_EPS).sqrt())
        .collect();
    for m in maps.iter_mut() {
        for row in m.data.chunks_exact_mut(c) {
            for i in 0..c {
                row[i] = (row[i] - mean[i]) * scale[i] + bn.beta[i];
            }
        }
    }
    Ok(stats)
}

/// Class-template logits: `Z[c] = mean_j ( (T[c] · θ)[j] · w + b )`.
pub fn pcac_logits(
    theta: &Matrix,
    templates: &ClassTemplateSet,
    weight: &[f64],
    bias: f64,
) -> Result<Vec<f64>, ModelError> {
    let (v, c) = theta.shape();
    if templates.joints() != v {
        return Err(ModelError::DimensionMismatch(format!(
            "templates cover {} joints, features {v}",
            templates.joints()
        )));
    }
    if weight.len() != c {
        return Err(ModelError::DimensionMismatch(format!(
            "head expects {} channels, features have {c}",
            weight.len()
        )));
    }
    // Per-joint projection first: the head is linear, so it commutes with T[c].
    let u: Vec<f64> = (0..v)
        .map(|j| theta.row(j).iter().zip(weight).map(|(x, w)| x * w).sum())
        .collect();
    Ok(templates
        .templates()
        .iter()
        .map(|t| {
            let mut s = 0.0;
            for i in 0..v {
                for (j, uj) in u.iter().enumerate() {
                    s += t[(i, j)] * uj;
                }
            }
            s / v as f64 + bias
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::TemporalBranch;
    use crate::prior_graphs::SimilarityKind;

    fn identity_mstc(c: usize) -> MsTcParams {
        let branch = |d| TemporalBranch {
            pointwise: Matrix::identity(c),
            pointwise_bias: vec![0.0; c],
            depthwise: Matrix::filled(c, 1, 1.0),
            depthwise_bias: vec![0.0; c],
            dilation: d,
        };
        MsTcParams {
            branches: vec![branch(1), branch(1)],
            pool_pointwise: Matrix::identity(c),
            pool_bias: vec![0.0; c],
            pool_window: 1,
            skip: Matrix::identity(c),
            skip_bias: vec![0.0; c],
        }
    }

    fn ramp(t: usize, v: usize, c: usize) -> FeatureMap {
        let data = (0..t * v * c).map(|i| (i as f64 * 0.37).sin()).collect();
        FeatureMap::from_vec(t, v, c, data).unwrap()
    }

    #[test]
    fn identity_branches_scale_input() {
        let f = ramp(6, 3, 2);
        let out = ms_tc_forward(&f, &identity_mstc(2), 1).unwrap();
        for (o, x) in out.data().iter().zip(f.data()) {
            assert_eq!(*o, 4.0 * x);
        }
    }

    #[test]
    fn stride_halves_frames() {
        let f = ramp(64, 2, 2);
        let out = ms_tc_forward(&f, &identity_mstc(2), 2).unwrap();
        assert_eq!(out.frames(), 32);
        assert_eq!(out.get(5, 1, 0), 4.0 * f.get(10, 1, 0));
    }

    #[test]
    fn constant_signal_stays_constant_inside() {
        let c = 2;
        let mut p = identity_mstc(c);
        for (b, d) in p.branches.iter_mut().zip([1, 2]) {
            b.depthwise = Matrix::filled(c, 5, 0.2);
            b.dilation = d;
        }
        p.pool_window = 3;
        let f = FeatureMap::from_vec(12, 1, c, vec![1.5; 12 * c]).unwrap();
        let out = ms_tc_forward(&f, &p, 1).unwrap();
        // Frames 4..8 see no padding with dilation 2 and kernel 5.
        for t in 4..8 {
            assert!((out.get(t, 0, 0) - 6.0).abs() < 1e-12);
        }
        assert!(out.get(0, 0, 0) < 6.0);
    }

    #[test]
    fn too_short() {
        let mut p = identity_mstc(1);
        p.branches[0].depthwise = Matrix::filled(1, 5, 1.0);
        p.branches[0].dilation = 2;
        let f = FeatureMap::zeros(8, 1, 1);
        assert_eq!(
            ms_tc_forward(&f, &p, 1),
            Err(ModelError::TooShort {
                frames: 8,
                required: 9
            })
        );
    }

    #[test]
    fn embed_examples() {
        let seq = SkeletonSequence::new(
            2,
            2,
            3,
            vec![
                1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0,
            ],
        )
        .unwrap();
        let pe = sinusoidal_pe(2, 4);
        let out = embed_input(&seq, &Matrix::zeros(3, 4), &pe).unwrap();
        assert_eq!(out.frame(1), pe.as_slice());

        let mut w0 = Matrix::zeros(3, 4);
        for i in 0..3 {
            w0[(i, i)] = 1.0;
        }
        let out = embed_input(&seq, &w0, &Matrix::zeros(2, 4)).unwrap();
        assert_eq!(out.frame(0), &[1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0, 0.0]);
        assert!(embed_input(&seq, &Matrix::zeros(2, 4), &pe).is_err());
    }

    #[test]
    fn pe_rows_differ() {
        let pe = sinusoidal_pe(2, 2);
        assert_eq!(pe.row(0), &[0.0, 1.0]);
        assert_eq!(pe.row(1), &[1.0_f64.sin(), 1.0_f64.cos()]);
    }

    #[test]
    fn batch_norm_standardizes() {
        let mut maps = vec![
            FeatureMap::from_vec(2, 1, 1, vec![1.0, 3.0]).unwrap(),
            FeatureMap::from_vec(2, 1, 1, vec![5.0, 7.0]).unwrap(),
        ];
        let stats = batch_norm(&mut maps, &BatchNorm::new(1), BnMode::Batch)
            .unwrap()
            .unwrap();
        assert_eq!(stats.mean, vec![4.0]);
        assert_eq!(stats.var, vec![5.0]);
        let s = (5.0 + BN_EPS).sqrt();
        assert!((maps[0].get(0, 0, 0) + 3.0 / s).abs() < 1e-15);

        let mut frozen = vec![FeatureMap::from_vec(1, 1, 1, vec![2.0]).unwrap()];
        batch_norm(&mut frozen, &BatchNorm::new(1), BnMode::Frozen).unwrap();
        assert!((frozen[0].get(0, 0, 0) - 2.0 / (1.0 + BN_EPS).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pcac_hand_example() {
        let ones = Matrix::filled(2, 2, 1.0);
        let t =
            ClassTemplateSet::new(vec![ones, Matrix::identity(2)], SimilarityKind::Cosine).unwrap();
        let theta = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert_eq!(
            pcac_logits(&theta, &t, &[1.0], 0.0).unwrap(),
            vec![2.0, 1.0]
        );
        let zero = Matrix::zeros(2, 1);
        assert_eq!(pcac_logits(&zero, &t, &[1.0], 0.3).unwrap(), vec![0.3, 0.3]);
    }
}
