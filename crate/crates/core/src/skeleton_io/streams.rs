use super::{PreprocessConfig, SequenceWarning, SkeletonError, SkeletonSequence};
use crate::bone_select::BoneMatrix;

/// Resamples to `cfg.target_frames` by linear interpolation on normalized
/// time, then translates so that `cfg.center_joint` in frame 0 is the origin.
pub fn preprocess(
    seq: &SkeletonSequence,
    cfg: &PreprocessConfig,
) -> Result<SkeletonSequence, SkeletonError> {
    if cfg.target_frames == 0 {
        return Err(SkeletonError::InvalidConfig(
            "target_frames must be >= 1".into(),
        ));
    }
    if cfg.center_joint >= seq.joints() {
        return Err(SkeletonError::InvalidConfig(format!(
            "center_joint {} out of range for {} joints",
            cfg.center_joint,
            seq.joints()
        )));
    }
    let (t_in, v, d) = (seq.frames(), seq.joints(), seq.dims());
    let t_out = cfg.target_frames;

    let mut data = Vec::with_capacity(t_out * v * d);
    for k in 0..t_out {
        let pos = if t_out == 1 {
            0.0
        } else {
            k as f64 * (t_in - 1) as f64 / (t_out - 1) as f64
        };
        let lo = (pos.floor() as usize).min(t_in - 1);
        let hi = (lo + 1).min(t_in - 1);
        let frac = pos - lo as f64;
        for j in 0..v {
            let a = seq.point(lo, j);
            let b = seq.point(hi, j);
            for c in 0..d {
                data.push(if frac == 0.0 {
                    a[c]
                } else {
                    (1.0 - frac) * a[c] + frac * b[c]
                });
            }
        }
    }

    let origin = seq.point(0, cfg.center_joint).to_vec();
    for p in data.chunks_exact_mut(d) {
        for (x, o) in p.iter_mut().zip(&origin) {
            *x -= o;
        }
    }

    let mut out = SkeletonSequence::new(t_out, v, d, data)?;
    out.label = seq.label;
    out.meta = seq.meta.clone();
    out.warnings = seq.warnings.clone();
    if t_in == 1 && t_out > 1 {
        out.warnings.push(SequenceWarning::RepeatedSingleFrame);
    }
    Ok(out)
}

/// Per frame `(I − B) X_t`: each target joint becomes the vector from its
/// source joint; the base joint keeps its raw coordinates.
pub fn bone_stream(
    seq: &SkeletonSequence,
    bones: &BoneMatrix,
) -> Result<SkeletonSequence, SkeletonError> {
    if bones.joints() != seq.joints() {
        return Err(SkeletonError::DimensionMismatch(format!(
            "bone matrix over {} joints applied to a {}-joint sequence",
            bones.joints(),
            seq.joints()
        )));
    }
    let mut out = seq.clone();
    for t in 0..seq.frames() {
        for target in 0..seq.joints() {
            if let Some(source) = bones.source_of(target) {
                let src = seq.point(t, source);
                for (x, s) in out.point_mut(t, target).iter_mut().zip(src) {
                    *x -= s;
                }
            }
        }
    }
    Ok(out)
}

/// Forward temporal difference `X_{t+1} − X_t`; the last frame is zero.
pub fn motion_stream(seq: &SkeletonSequence) -> SkeletonSequence {
    let stride = seq.joints() * seq.dims();
    let src = seq.data();
    let mut data = vec![0.0; src.len()];
    for t in 0..seq.frames().saturating_sub(1) {
        for i in 0..stride {
            data[t * stride + i] = src[(t + 1) * stride + i] - src[t * stride + i];
        }
    }
    seq.with_data(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_joint_ramp(xs: &[f64]) -> SkeletonSequence {
        // Joint 0 is a fixed origin, joint 1 carries the ramp.
        let data = xs
            .iter()
            .flat_map(|&x| [0.0, 0.0, 0.0, x, 0.0, 0.0])
            .collect();
        SkeletonSequence::new(xs.len(), 2, 3, data).unwrap()
    }

    #[test]
    fn linear_resample_four_to_eight() {
        let seq = single_joint_ramp(&[0.0, 1.0, 2.0, 3.0]);
        let cfg = PreprocessConfig {
            target_frames: 8,
            ..Default::default()
        };
        let out = preprocess(&seq, &cfg).unwrap();
        assert_eq!(out.frames(), 8);
        for k in 0..8 {
            let want = 3.0 * k as f64 / 7.0;
            assert!((out.point(k, 1)[0] - want).abs() < 1e-12, "frame {k}");
        }
        assert_eq!(out.point(7, 1)[0], 3.0);
    }

    #[test]
    fn centering_uses_frame_zero() {
        let seq = SkeletonSequence::new(
            2,
            2,
            3,
            vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 1.5, 1.0, 1.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let cfg = PreprocessConfig {
            target_frames: 2,
            center_joint: 0,
            ..Default::default()
        };
        let out = preprocess(&seq, &cfg).unwrap();
        assert_eq!(out.point(0, 0), &[0.0, 0.0, 0.0]);
        assert_eq!(out.point(0, 1), &[1.0, 2.0, 3.0]);
        assert_eq!(out.point(1, 0), &[0.5, 0.0, 0.0]);
    }

    #[test]
    fn same_length_is_identity_up_to_centering() {
        let seq = single_joint_ramp(&[0.0, 0.5, 2.0]);
        let cfg = PreprocessConfig {
            target_frames: 3,
            ..Default::default()
        };
        assert_eq!(preprocess(&seq, &cfg).unwrap().data(), seq.data());
    }

    #[test]
    fn single_frame_is_repeated_and_flagged() {
        let seq = single_joint_ramp(&[2.0]);
        let cfg = PreprocessConfig {
            target_frames: 4,
            ..Default::default()
        };
        let out = preprocess(&seq, &cfg).unwrap();
        assert_eq!(out.frames(), 4);
        assert!(out.warnings.contains(&SequenceWarning::RepeatedSingleFrame));
        assert!((0..4).all(|t| out.point(t, 1)[0] == 2.0));
    }

    #[test]
    fn bad_center_joint() {
        let seq = single_joint_ramp(&[0.0]);
        let cfg = PreprocessConfig {
            target_frames: 1,
            center_joint: 5,
            ..Default::default()
        };
        assert!(matches!(
            preprocess(&seq, &cfg),
            Err(SkeletonError::InvalidConfig(_))
        ));
    }

    #[test]
    fn two_joint_bone() {
        let seq = single_joint_ramp(&[1.0]);
        let b = BoneMatrix::from_sources(0, vec![None, Some(0)]).unwrap();
        let out = bone_stream(&seq, &b).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_bone_matrix_is_identity() {
        let seq = single_joint_ramp(&[1.0, 2.0]);
        let b = BoneMatrix::empty(2);
        assert_eq!(bone_stream(&seq, &b).unwrap(), seq);
    }

    #[test]
    fn collinear_chain() {
        let seq = SkeletonSequence::new(1, 3, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0])
            .unwrap();
        let b = BoneMatrix::from_sources(0, vec![None, Some(0), Some(1)]).unwrap();
        let out = bone_stream(&seq, &b).unwrap();
        assert_eq!(out.point(0, 1), &[1.0, 0.0, 0.0]);
        assert_eq!(out.point(0, 2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn bone_dimension_mismatch() {
        let seq = single_joint_ramp(&[1.0]);
        let b = BoneMatrix::empty(3);
        assert!(matches!(
            bone_stream(&seq, &b),
            Err(SkeletonError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn motion_of_ramp() {
        let seq = single_joint_ramp(&[0.0, 0.5, 1.0, 1.5]);
        let m = motion_stream(&seq);
        for t in 0..3 {
            assert_eq!(m.point(t, 1)[0], 0.5);
        }
        assert_eq!(m.point(3, 1), &[0.0, 0.0, 0.0]);
        assert!(m.point(0, 0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn motion_single_frame() {
        let seq = single_joint_ramp(&[4.0]);
        assert!(motion_stream(&seq).data().iter().all(|&x| x == 0.0));
    }
}
