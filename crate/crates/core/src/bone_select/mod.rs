//! Bone selection: score every unordered joint pair by the temporal
//! variability of its difference vector, then pick one incoming bone per
//! non-base joint so that the total score is minimal.
//!
//! Selection is an assignment problem between targets (the `V − 1` non-base
//! joints) and unordered pairs. Target `t` may take any of the `V − 1` pairs
//! that contain it and no pair may be taken twice.
//!
//! A complete assignment exists for every `V ≥ 2` (Hall's condition). For
//! `V = 2` there is one target and one pair. For `V ≥ 3`, any set `S` of `k`
//! targets touches `k(V − 1)` target-pair incidences and each pair holds at
//! most two targets, so `S` reaches at least `k(V − 1)/2 ≥ k` distinct pairs.

mod brute;
mod matching;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::prior_graphs::GprGraph;
use crate::skeleton_io::SkeletonSequence;

pub use brute::{brute_force_select, BRUTE_FORCE_MAX_JOINTS};
pub use matching::{select_max_assignment, select_min_assignment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoneError {
    #[error("bone endpoints must differ (joint {0})")]
    SameJoint(usize),
    #[error("no samples to score")]
    EmptySampleSet,
    #[error("sample {index} has {found} joints, expected {expected}")]
    InconsistentJointCount {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("brute force supports at most {max} joints, got {joints}")]
    TooLarge { joints: usize, max: usize },
    #[error("invalid bone matrix: {0}")]
    InvalidBoneMatrix(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),
}

/// Directed bones: at most one source per target joint, none for the base,
/// and no unordered pair used twice.
///
/// As an operator it is the `V × V` binary matrix `B` with `B[target][source]
/// = 1`, so `(I − B) X` turns joint rows into bone rows and the base row of
/// `B` is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoneMatrix {
    base: usize,
    sources: Vec<Option<usize>>,
}

impl BoneMatrix {
    /// The zero matrix over `joints` joints (base 0, no bones).
    pub fn empty(joints: usize) -> Self {
        Self {
            base: 0,
            sources: vec![None; joints],
        }
    }

    /// `sources[target]` is the source joint of `target`, `None` for the base.
    pub fn from_sources(base: usize, sources: Vec<Option<usize>>) -> Result<Self, BoneError> {
        let v = sources.len();
        if base >= v {
            return Err(BoneError::InvalidBoneMatrix(format!(
                "base {base} out of range for {v} joints"
            )));
        }
        if sources[base].is_some() {
            return Err(BoneError::InvalidBoneMatrix(format!(
                "base joint {base} has an incoming bone"
            )));
        }
        let mut used = vec![false; v * v];
        for (target, src) in sources.iter().enumerate() {
            let Some(src) = *src else { continue };
            if src >= v {
                return Err(BoneError::InvalidBoneMatrix(format!(
                    "source {src} out of range"
                )));
            }
            if src == target {
                return Err(BoneError::SameJoint(src));
            }
            let key = src.min(target) * v + src.max(target);
            if used[key] {
                return Err(BoneError::InvalidBoneMatrix(format!(
                    "pair {{{},{}}} used twice",
                    src.min(target),
                    src.max(target)
                )));
            }
            used[key] = true;
        }
        Ok(Self { base, sources })
    }

    /// Builds from `(source, target)` pairs over `joints` joints.
    pub fn from_pairs(
        joints: usize,
        base: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Self, BoneError> {
        let mut sources = vec![None; joints];
        for &(src, tgt) in pairs {
            if tgt >= joints {
                return Err(BoneError::InvalidBoneMatrix(format!(
                    "target {tgt} out of range"
                )));
            }
            if sources[tgt].replace(src).is_some() {
                return Err(BoneError::InvalidBoneMatrix(format!(
                    "joint {tgt} has two incoming bones"
                )));
            }
        }
        Self::from_sources(base, sources)
    }

    /// Physical bones of the 25-joint Kinect v2 / NTU RGB+D skeleton
    /// (0-based; base is joint 20, the spine shoulder).
    pub fn physical_ntu() -> Self {
        // (target, source), 1-based as commonly tabulated.
        const PAIRS: [(usize, usize); 24] = [
            (1, 2),
            (2, 21),
            (3, 21),
            (4, 3),
            (5, 21),
            (6, 5),
            (7, 6),
            (8, 7),
            (9, 21),
            (10, 9),
            (11, 10),
            (12, 11),
            (13, 1),
            (14, 13),
            (15, 14),
            (16, 15),
            (17, 1),
            (18, 17),
            (19, 18),
            (20, 19),
            (22, 23),
            (23, 8),
            (24, 25),
            (25, 12),
        ];
        let pairs: Vec<(usize, usize)> = PAIRS.iter().map(|&(t, s)| (s - 1, t - 1)).collect();
        Self::from_pairs(25, 20, &pairs).expect("physical skeleton is a valid tree")
    }

    /// A chain `0 → 1 → … → V−1` rooted at joint 0.
    pub fn chain(joints: usize) -> Self {
        let sources = (0..joints).map(|t| t.checked_sub(1)).collect();
        Self::from_sources(0, sources).expect("chain is valid")
    }

    pub fn joints(&self) -> usize {
        self.sources.len()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn source_of(&self, target: usize) -> Option<usize> {
        self.sources[target]
    }

    /// True when every non-base joint has an incoming bone.
    pub fn is_complete(&self) -> bool {
        self.sources
            .iter()
            .enumerate()
            .all(|(t, s)| (t == self.base) == s.is_none())
    }

    /// `(source, target)` pairs in ascending target order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.sources
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.map(|s| (s, t)))
            .collect()
    }

    /// True when `source` is the source of `target`.
    pub fn is_bone(&self, source: usize, target: usize) -> bool {
        self.sources.get(target).copied().flatten() == Some(source)
    }

    /// Dense operator `B` with `B[target][source] = 1`.
    pub fn to_dense(&self) -> Matrix {
        let v = self.joints();
        let mut m = Matrix::zeros(v, v);
        for (s, t) in self.pairs() {
            m[(t, s)] = 1.0;
        }
        m
    }

    /// Undirected adjacency (symmetric 0/1, zero diagonal).
    pub fn adjacency(&self) -> Matrix {
        let v = self.joints();
        let mut m = Matrix::zeros(v, v);
        for (s, t) in self.pairs() {
            m[(t, s)] = 1.0;
            m[(s, t)] = 1.0;
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct BoneMatrixJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joints: Option<usize>,
    base: usize,
    pairs: Vec<[usize; 2]>,
}

impl Serialize for BoneMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        BoneMatrixJson {
            joints: Some(self.joints()),
            base: self.base,
            pairs: self.pairs().into_iter().map(|(s, t)| [s, t]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoneMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = BoneMatrixJson::deserialize(deserializer)?;
        let pairs: Vec<(usize, usize)> = raw.pairs.iter().map(|p| (p[0], p[1])).collect();
        let joints = raw.joints.unwrap_or(pairs.len() + 1);
        BoneMatrix::from_pairs(joints, raw.base, &pairs).map_err(D::Error::custom)
    }
}

/// Symmetric per-pair scores; the diagonal is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    score: Matrix,
    n_samples: usize,
}

impl CandidateScores {
    pub fn new(score: Matrix, n_samples: usize) -> Result<Self, BoneError> {
        if !score.is_square() || score.rows() < 2 {
            return Err(BoneError::InvalidScores(format!(
                "need a square matrix with V >= 2, got {}x{}",
                score.rows(),
                score.cols()
            )));
        }
        let v = score.rows();
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let s = score[(i, j)];
                if !s.is_finite() || s < 0.0 {
                    return Err(BoneError::InvalidScores(format!(
                        "score[{i}][{j}] = {s} is not a finite non-negative number"
                    )));
                }
                if s != score[(j, i)] {
                    return Err(BoneError::InvalidScores(format!(
                        "score[{i}][{j}] != score[{j}][{i}]"
                    )));
                }
            }
        }
        Ok(Self { score, n_samples })
    }

    /// Builds from the strict upper triangle, mirroring it.
    pub fn from_upper(v: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, BoneError> {
        let mut m = Matrix::zeros(v, v);
        for i in 0..v {
            for j in (i + 1)..v {
                let s = f(i, j);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Self::new(m, 1)
    }

    pub fn joints(&self) -> usize {
        self.score.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn matrix(&self) -> &Matrix {
        &self.score
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.score[(i, j)]
    }

    /// Mean over all `V(V−1)/2` candidate pairs.
    pub fn mean_candidate_score(&self) -> f64 {
        let v = self.joints();
        let mut sum = 0.0;
        for i in 0..v {
            for j in (i + 1)..v {
                sum += self.score[(i, j)];
            }
        }
        sum / (v * (v - 1) / 2) as f64
    }

    /// Sum of scores of the bones in `bones`, accumulated in target order.
    pub fn assignment_cost(&self, bones: &BoneMatrix) -> f64 {
        bones
            .pairs()
            .into_iter()
            .map(|(s, t)| self.score[(s, t)])
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, BoneError> {
        Self::new(self.score.scale(factor), self.n_samples)
    }
}

/// Mean over the `d` coordinates of the population standard deviation over
/// time of the bone vector `x_j(t) − x_i(t)`.
pub fn bone_std(seq: &SkeletonSequence, i: usize, j: usize) -> Result<f64, BoneError> {
    if i == j {
        return Err(BoneError::SameJoint(i));
    }
    let v = seq.joints();
    if i >= v || j >= v {
        return Err(BoneError::InvalidBoneMatrix(format!(
            "joint index out of range for {v} joints"
        )));
    }
    let t_len = seq.frames() as f64;
    let d = seq.dims();
    let mut acc = 0.0;
    for c in 0..d {
        let diff = |t: usize| seq.point(t, j)[c] - seq.point(t, i)[c];
        let mean = (0..seq.frames()).map(diff).sum::<f64>() / t_len;
        let var = (0..seq.frames())
            .map(|t| {
                let e = diff(t) - mean;
                e * e
            })
            .sum::<f64>()
            / t_len;
        acc += var.sqrt();
    }
    Ok(acc / d as f64)
}

fn sample_stds(seq: &SkeletonSequence) -> Vec<f64> {
    let v = seq.joints();
    let mut out = Vec::with_capacity(v * (v - 1) / 2);
    for i in 0..v {
        for j in (i + 1)..v {
            out.push(bone_std(seq, i, j).expect("distinct in-range joints"));
        }
    }
    out
}

/// Mean per-pair bone std over `samples`, optionally multiplied by the
/// max-normalized GPR distance `dist[i][j] / max(dist)`.
///
/// Samples are scored in parallel and reduced in input order. A GPR graph
/// whose distances are all zero carries no preference and leaves the scores
/// unweighted.
pub fn dataset_scores(
    samples: &[SkeletonSequence],
    gpr: Option<&GprGraph>,
) -> Result<CandidateScores, BoneError> {
    let first = samples.first().ok_or(BoneError::EmptySampleSet)?;
    let v = first.joints();
    for (index, s) in samples.iter().enumerate() {
        if s.joints() != v {
            return Err(BoneError::InconsistentJointCount {
                index,
                expected: v,
                found: s.joints(),
            });
        }
    }
    if let Some(g) = gpr {
        if g.joints() != v {
            return Err(BoneError::InconsistentJointCount {
                index: usize::MAX,
                expected: v,
                found: g.joints(),
            });
        }
    }

    let per_sample: Vec<Vec<f64>> = samples.par_iter().map(sample_stds).collect();
    let mut mean = vec![0.0; v * (v - 1) / 2];
    for stds in &per_sample {
        for (m, s) in mean.iter_mut().zip(stds) {
            *m += s;
        }
    }
    let n = samples.len() as f64;

    let max_dist = gpr.map_or(0.0, |g| g.max_distance());
    let mut score = Matrix::zeros(v, v);
    let mut k = 0;
    for i in 0..v {
        for j in (i + 1)..v {
            let mut s = mean[k] / n;
            if let (Some(g), true) = (gpr, max_dist > 0.0) {
                s *= g.dist()[(i, j)] / max_dist;
            }
            score[(i, j)] = s;
            score[(j, i)] = s;
            k += 1;
        }
    }
    CandidateScores::new(score, samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_with_x_diffs(diffs: &[f64]) -> SkeletonSequence {
        let data = diffs
            .iter()
            .flat_map(|&x| [0.0, 5.0, 1.0, x, 5.0, 1.0])
            .collect();
        SkeletonSequence::new(diffs.len(), 2, 3, data).unwrap()
    }

    #[test]
    fn std_of_constant_bone_is_zero() {
        let s = seq_with_x_diffs(&[2.0, 2.0, 2.0]);
        assert_eq!(bone_std(&s, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn std_of_ramp() {
        let s = seq_with_x_diffs(&[0.0, 1.0, 2.0, 3.0]);
        let want = 1.25_f64.sqrt() / 3.0;
        assert!((bone_std(&s, 0, 1).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.37268).abs() < 1e-5);
    }

    #[test]
    fn std_single_frame_and_same_joint() {
        let s = seq_with_x_diffs(&[7.0]);
        assert_eq!(bone_std(&s, 1, 0).unwrap(), 0.0);
        assert_eq!(bone_std(&s, 1, 1), Err(BoneError::SameJoint(1)));
    }

    #[test]
    fn scores_average_over_samples() {
        // Population std of {-a, a} is a: use that to hit 0.2 * 3 and 0.4 * 3
        // (coordinate mean divides by 3).
        let a = seq_with_x_diffs(&[-0.6, 0.6]);
        let b = seq_with_x_diffs(&[-1.2, 1.2]);
        let s = dataset_scores(&[a, b], None).unwrap();
        assert!((s.get(0, 1) - 0.3).abs() < 1e-12);
        assert_eq!(s.n_samples(), 2);
    }

    #[test]
    fn single_sample_equals_bone_std() {
        let a = seq_with_x_diffs(&[0.0, 1.0, 2.0, 3.0]);
        let s = dataset_scores(std::slice::from_ref(&a), None).unwrap();
        assert_eq!(s.get(0, 1), bone_std(&a, 0, 1).unwrap());
    }

    #[test]
    fn uniform_gpr_leaves_scores_unchanged() {
        let a = seq_with_x_diffs(&[0.0, 1.0, 2.0, 3.0]);
        let g = GprGraph::new(Matrix::from_rows(&[[0.0, 2.5], [2.5, 0.0]]).unwrap()).unwrap();
        let plain = dataset_scores(std::slice::from_ref(&a), None).unwrap();
        let weighted = dataset_scores(std::slice::from_ref(&a), Some(&g)).unwrap();
        assert_eq!(plain, weighted);
    }

    #[test]
    fn empty_and_inconsistent_samples() {
        assert_eq!(dataset_scores(&[], None), Err(BoneError::EmptySampleSet));
        let a = seq_with_x_diffs(&[0.0]);
        let b = SkeletonSequence::new(1, 3, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(
            dataset_scores(&[a, b], None),
            Err(BoneError::InconsistentJointCount { index: 1, .. })
        ));
    }

    #[test]
    fn physical_ntu_is_complete_tree() {
        let b = BoneMatrix::physical_ntu();
        assert_eq!(b.joints(), 25);
        assert_eq!(b.base(), 20);
        assert!(b.is_complete());
        assert_eq!(b.pairs().len(), 24);
    }

    #[test]
    fn operator_row_sums() {
        let b = BoneMatrix::physical_ntu();
        let op = Matrix::identity(25).sub(&b.to_dense()).unwrap();
        for (i, s) in op.row_sums().into_iter().enumerate() {
            assert_eq!(s, if i == b.base() { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn repeated_pair_rejected() {
        // 1 <- 0 and 0 <- 1 would reuse {0,1}; base is 2.
        let err = BoneMatrix::from_sources(2, vec![Some(1), Some(0), None]).unwrap_err();
        assert!(matches!(err, BoneError::InvalidBoneMatrix(_)));
        assert!(BoneMatrix::from_sources(0, vec![Some(1), None]).is_err());
    }

    #[test]
    fn json_shape() {
        let b = BoneMatrix::from_sources(0, vec![None, Some(0), Some(1)]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"joints":3,"base":0,"pairs":[[0,1],[1,2]]}"#);
        let back: BoneMatrix = serde_json::from_str(r#"{"base":0,"pairs":[[0,1],[1,2]]}"#).unwrap();
        assert_eq!(back, b);
    }
}
