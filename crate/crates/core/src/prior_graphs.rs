//! Prior graphs built from per-(class, joint) text embeddings.
//!
//! The global graph holds Euclidean distances between per-joint class
//! centroids. The class templates hold, for every class, pairwise
//! similarities between that class's joint embeddings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bone_select::BoneMatrix;
use crate::linalg::Matrix;
use crate::skeleton_io::{bone_stream, SkeletonError, SkeletonSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("class {class} joint {joint} has a zero-norm embedding")]
    ZeroVector { class: usize, joint: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

impl From<SkeletonError> for PriorError {
    fn from(e: SkeletonError) -> Self {
        PriorError::DimensionMismatch(e.to_string())
    }
}

/// Prompt template used to produce the embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl FromStr for PromptId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "p1" => PromptId::P1,
            "p2" => PromptId::P2,
            "p3" => PromptId::P3,
            "p4" => PromptId::P4,
            "p5" => PromptId::P5,
            "p6" => PromptId::P6,
            other => return Err(format!("unknown prompt {other:?}, expected p1..p6")),
        })
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = *self as u8 + 1;
        write!(f, "p{n}")
    }
}

/// `M × V × C` embedding tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    classes: usize,
    joints: usize,
    dim: usize,
    vectors: Vec<f64>,
    pub prompt: PromptId,
    pub encoder: String,
    pub class_names: Vec<String>,
    pub joint_names: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(
        classes: usize,
        joints: usize,
        dim: usize,
        vectors: Vec<f64>,
        prompt: PromptId,
    ) -> Result<Self, PriorError> {
        let bad = |path: &str, reason: String| PriorError::SchemaViolation {
            path: path.into(),
            reason,
        };
        if classes == 0 {
            return Err(bad("/classes", "must be >= 1".into()));
        }
        if joints < 2 {
            return Err(bad("/joints", "must be >= 2".into()));
        }
        if dim == 0 {
            return Err(bad("/dim", "must be >= 1".into()));
        }
        if vectors.len() != classes * joints * dim {
            return Err(bad(
                "/vectors",
                format!(
                    "{} values for a {classes}x{joints}x{dim} table",
                    vectors.len()
                ),
            ));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(bad("/vectors", "non-finite value".into()));
        }
        Ok(Self {
            classes,
            joints,
            dim,
            vectors,
            prompt,
            encoder: String::new(),
            class_names: (0..classes).map(|c| format!("class{c}")).collect(),
            joint_names: (0..joints).map(|j| format!("joint{j}")).collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, class: usize, joint: usize) -> &[f64] {
        let start = (class * self.joints + joint) * self.dim;
        &self.vectors[start..start + self.dim]
    }

    /// Parses and validates the embedding file format.
    pub fn from_json(src: &str) -> Result<Self, PriorError> {
        let v: Value = serde_json::from_str(src).map_err(|e| PriorError::SchemaViolation {
            path: "/".into(),
            reason: e.to_string(),
        })?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self, PriorError> {
        let bad = |path: String, reason: &str| PriorError::SchemaViolation {
            path,
            reason: reason.into(),
        };
        let obj = v
            .as_object()
            .ok_or_else(|| bad("/".into(), "expected object"))?;
        let int = |key: &str| -> Result<usize, PriorError> {
            obj.get(key)
                .and_then(Value::as_u64)
                .map(|n| n as usize)
                .ok_or_else(|| bad(format!("/{key}"), "missing or not a non-negative integer"))
        };
        if int("version")? != 1 {
            return Err(bad("/version".into(), "unsupported version"));
        }
        let classes = int("classes")?;
        let joints = int("joints")?;
        let dim = int("dim")?;
        let prompt: PromptId = obj
            .get("prompt")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("/prompt".into(), "missing"))?
            .parse()
            .map_err(|e: String| bad("/prompt".into(), &e))?;
        let encoder = obj
            .get("encoder")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        let names = |key: &str, n: usize| -> Result<Option<Vec<String>>, PriorError> {
            let Some(list) = obj.get(key) else {
                return Ok(None);
            };
            let list = list
                .as_array()
                .ok_or_else(|| bad(format!("/{key}"), "expected array"))?;
            if list.len() != n {
                return Err(bad(format!("/{key}"), "length does not match count"));
            }
            list.iter()
                .enumerate()
                .map(|(i, s)| {
                    s.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| bad(format!("/{key}/{i}"), "expected string"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        };
        let class_names = names("class_names", classes)?;
        let joint_names = names("joint_names", joints)?;

        let vecs = obj
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("/vectors".into(), "missing or not an array"))?;
        if vecs.len() != classes {
            return Err(bad("/vectors".into(), "outer length must equal classes"));
        }
        let mut flat = Vec::with_capacity(classes * joints * dim);
        for (c, per_class) in vecs.iter().enumerate() {
            let per_class = per_class
                .as_array()
                .filter(|a| a.len() == joints)
                .ok_or_else(|| bad(format!("/vectors/{c}"), "expected array of length joints"))?;
            for (j, vec) in per_class.iter().enumerate() {
                let vec = vec.as_array().filter(|a| a.len() == dim).ok_or_else(|| {
                    bad(format!("/vectors/{c}/{j}"), "expected array of length dim")
                })?;
                for (k, x) in vec.iter().enumerate() {
                    let x = x.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                        bad(format!("/vectors/{c}/{j}/{k}"), "expected finite number")
                    })?;
                    flat.push(x);
                }
            }
        }
        let mut table = Self::new(classes, joints, dim, flat, prompt)?;
        table.encoder = encoder;
        if let Some(n) = class_names {
            table.class_names = n;
        }
        if let Some(n) = joint_names {
            table.joint_names = n;
        }
        Ok(table)
    }

    pub fn to_json_value(&self) -> Value {
        let vectors: Vec<Vec<Vec<f64>>> = (0..self.classes)
            .map(|c| {
                (0..self.joints)
                    .map(|j| self.vector(c, j).to_vec())
                    .collect()
            })
            .collect();
        serde_json::json!({
            "version": 1,
            "classes": self.classes,
            "joints": self.joints,
            "dim": self.dim,
            "prompt": self.prompt.to_string(),
            "encoder": self.encoder,
            "class_names": self.class_names,
            "joint_names": self.joint_names,
            "vectors": vectors,
        })
    }
}

/// `V × V` Euclidean distances between joint class-centroids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GprGraph {
    dist: Matrix,
}

impl GprGraph {
    pub fn new(dist: Matrix) -> Result<Self, PriorError> {
        if !dist.is_square() {
            return Err(PriorError::InvalidGraph(
                "distance matrix is not square".into(),
            ));
        }
        if !dist.is_finite() {
            return Err(PriorError::InvalidGraph("non-finite distance".into()));
        }
        let v = dist.rows();
        for i in 0..v {
            if dist[(i, i)] != 0.0 {
                return Err(PriorError::InvalidGraph(format!("dist[{i}][{i}] != 0")));
            }
            for j in 0..v {
                if dist[(i, j)] < 0.0 || dist[(i, j)] != dist[(j, i)] {
                    return Err(PriorError::InvalidGraph(format!(
                        "dist[{i}][{j}] must be non-negative and symmetric"
                    )));
                }
            }
        }
        Ok(Self { dist })
    }

    pub fn joints(&self) -> usize {
        self.dist.rows()
    }

    pub fn dist(&self) -> &Matrix {
        &self.dist
    }

    pub fn max_distance(&self) -> f64 {
        self.dist.max_abs()
    }

    /// Accepts either `{"dist": [[...]]}` or a bare 2-D array.
    pub fn from_json(src: &str) -> Result<Self, PriorError> {
        let v: Value = serde_json::from_str(src).map_err(|e| PriorError::SchemaViolation {
            path: "/".into(),
            reason: e.to_string(),
        })?;
        let (m, path) = match v.get("dist") {
            Some(d) => (d.clone(), "/dist"),
            None => (v, "/"),
        };
        let dist: Matrix = serde_json::from_value(m).map_err(|e| PriorError::SchemaViolation {
            path: path.into(),
            reason: e.to_string(),
        })?;
        Self::new(dist)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    /// Euclidean distance (a dissimilarity; zero on the diagonal).
    Euclidean,
}

/// Per-class `V × V` joint similarity templates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassTemplateSet {
    pub similarity: SimilarityKind,
    templates: Vec<Matrix>,
}

impl ClassTemplateSet {
    pub fn new(templates: Vec<Matrix>, similarity: SimilarityKind) -> Result<Self, PriorError> {
        let v = templates
            .first()
            .map(Matrix::rows)
            .ok_or_else(|| PriorError::InvalidGraph("no templates".into()))?;
        for (c, t) in templates.iter().enumerate() {
            if t.shape() != (v, v) {
                return Err(PriorError::DimensionMismatch(format!(
                    "template {c} is {}x{}, expected {v}x{v}",
                    t.rows(),
                    t.cols()
                )));
            }
            if !t.is_finite() || t.asymmetry() > 0.0 {
                return Err(PriorError::InvalidGraph(format!(
                    "template {c} must be finite and symmetric"
                )));
            }
        }
        Ok(Self {
            similarity,
            templates,
        })
    }

    pub fn classes(&self) -> usize {
        self.templates.len()
    }

    pub fn joints(&self) -> usize {
        self.templates[0].rows()
    }

    pub fn template(&self, class: usize) -> &Matrix {
        &self.templates[class]
    }

    pub fn templates(&self) -> &[Matrix] {
        &self.templates
    }
}

/// Row `i` is the mean of joint `i`'s vectors over all classes.
pub fn class_centroids(table: &EmbeddingTable) -> Matrix {
    let mut out = Matrix::zeros(table.joints(), table.dim());
    for c in 0..table.classes() {
        for j in 0..table.joints() {
            for (o, x) in out.row_mut(j).iter_mut().zip(table.vector(c, j)) {
                *o += x;
            }
        }
    }
    out.scale(1.0 / table.classes() as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn build_gpr(centroids: &Matrix) -> Result<GprGraph, PriorError> {
    if !centroids.is_finite() {
        return Err(PriorError::InvalidGraph("non-finite centroid".into()));
    }
    let v = centroids.rows();
    let mut dist = Matrix::zeros(v, v);
    for i in 0..v {
        for j in (i + 1)..v {
            let d = euclidean(centroids.row(i), centroids.row(j));
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    GprGraph::new(dist)
}

/// Cosine-similarity templates.
pub fn build_templates(table: &EmbeddingTable) -> Result<ClassTemplateSet, PriorError> {
    build_templates_with(table, SimilarityKind::Cosine)
}

pub fn build_templates_with(
    table: &EmbeddingTable,
    kind: SimilarityKind,
) -> Result<ClassTemplateSet, PriorError> {
    let v = table.joints();
    let mut templates = Vec::with_capacity(table.classes());
    for c in 0..table.classes() {
        let mut t = Matrix::zeros(v, v);
        match kind {
            SimilarityKind::Cosine => {
                let norms: Vec<f64> = (0..v)
                    .map(|j| {
                        let n = table.vector(c, j).iter().map(|x| x * x).sum::<f64>().sqrt();
                        if n == 0.0 {
                            Err(PriorError::ZeroVector { class: c, joint: j })
                        } else {
                            Ok(n)
                        }
                    })
                    .collect::<Result<_, _>>()?;
                for i in 0..v {
                    for j in i..v {
                        let dot: f64 = table
                            .vector(c, i)
                            .iter()
                            .zip(table.vector(c, j))
                            .map(|(a, b)| a * b)
                            .sum();
                        let s = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                        t[(i, j)] = s;
                        t[(j, i)] = s;
                    }
                }
            }
            SimilarityKind::Euclidean => {
                for i in 0..v {
                    for j in (i + 1)..v {
                        let d = euclidean(table.vector(c, i), table.vector(c, j));
                        t[(i, j)] = d;
                        t[(j, i)] = d;
                    }
                }
            }
        }
        templates.push(t);
    }
    ClassTemplateSet::new(templates, kind)
}

/// Prior-guided input representation: `(I − B̃) X` per frame, where `B̃` is
/// the bone set selected with GPR-weighted scores.
pub fn weight_skeleton(
    seq: &SkeletonSequence,
    selected: &BoneMatrix,
) -> Result<SkeletonSequence, PriorError> {
    Ok(bone_stream(seq, selected)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(classes: usize, joints: usize, dim: usize, v: &[f64]) -> EmbeddingTable {
        EmbeddingTable::new(classes, joints, dim, v.to_vec(), PromptId::P3).unwrap()
    }

    #[test]
    fn centroid_two_classes() {
        // joint 0: (1,0) and (0,1); joint 1 arbitrary.
        let t = table(2, 2, 2, &[1.0, 0.0, 3.0, 3.0, 0.0, 1.0, 1.0, 1.0]);
        let c = class_centroids(&t);
        assert_eq!(c.row(0), &[0.5, 0.5]);
        assert_eq!(c.row(1), &[2.0, 2.0]);
    }

    #[test]
    fn centroid_single_class_is_identity() {
        let t = table(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(class_centroids(&t).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn centroid_three_classes() {
        let t = table(3, 2, 1, &[0.0, 1.0, 3.0, 1.0, 6.0, 1.0]);
        assert_eq!(class_centroids(&t).row(0), &[3.0]);
    }

    #[test]
    fn gpr_of_unit_vectors() {
        let g = build_gpr(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(g.dist()[(0, 1)], 2.0_f64.sqrt());
        assert_eq!(g.dist()[(0, 0)], 0.0);
    }

    #[test]
    fn gpr_of_identical_centroids_is_zero() {
        let g = build_gpr(&Matrix::filled(4, 3, 0.7)).unwrap();
        assert_eq!(g.max_distance(), 0.0);
    }

    #[test]
    fn cosine_cases() {
        let t = table(2, 2, 2, &[2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 0.0]);
        let tc = build_templates(&t).unwrap();
        assert!(tc
            .template(0)
            .as_slice()
            .iter()
            .all(|&x| (x - 1.0).abs() < 1e-15));
        assert!((tc.template(1)[(0, 1)] - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);

        let orth = table(1, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(build_templates(&orth).unwrap().template(0)[(0, 1)], 0.0);
    }

    #[test]
    fn zero_vector_is_reported() {
        let t = table(1, 2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            build_templates(&t),
            Err(PriorError::ZeroVector { class: 0, joint: 1 })
        );
    }

    #[test]
    fn prompt_ids() {
        assert_eq!("p3".parse::<PromptId>().unwrap(), PromptId::P3);
        assert_eq!(PromptId::P6.to_string(), "p6");
        assert!("p7".parse::<PromptId>().is_err());
    }

    #[test]
    fn weighting_twice_differs_from_once() {
        let seq = SkeletonSequence::new(1, 3, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.0])
            .unwrap();
        let b = BoneMatrix::chain(3);
        let once = weight_skeleton(&seq, &b).unwrap();
        let twice = weight_skeleton(&once, &b).unwrap();
        assert_eq!(once.point(0, 2), &[2.0, 0.0, 0.0]);
        assert_eq!(twice.point(0, 2), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn json_round_trip() {
        let t = table(1, 2, 2, &[1.0, 0.5, 0.25, 2.0]);
        let back = EmbeddingTable::from_value(&t.to_json_value()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_errors_have_paths() {
        let mut v = table(1, 2, 2, &[1.0, 0.5, 0.25, 2.0]).to_json_value();
        v["vectors"][0][1][0] = serde_json::json!("x");
        match EmbeddingTable::from_value(&v) {
            Err(PriorError::SchemaViolation { path, .. }) => assert_eq!(path, "/vectors/0/1/0"),
            other => panic!("unexpected {other:?}"),
        }
        v["prompt"] = serde_json::json!("p9");
        assert!(EmbeddingTable::from_value(&v).is_err());
    }
}
