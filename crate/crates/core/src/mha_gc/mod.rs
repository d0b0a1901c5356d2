//! Multi-hop attention graph convolution.
//!
//! One-hop attention `Ā = Ȧ + γ · Σ_r W3[r] · tanh(M_i[r] − N_j[r])` is
//! diffused over `k` hops as `𝒜̄ = Σ_{i=0..k} β(1−β)^i Ā^i`, or approximated by
//! the recursion `E ← (1−β) Ā E + β F`. The [`spectral`] submodule checks the
//! eigenvalue relation between `Ā` and `𝒜̄`.

mod eigen;
pub mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bone_select::BoneMatrix;
use crate::error::ShapeError;
use crate::linalg::Matrix;

pub use eigen::{symmetric_eigen, Eigen};
pub use spectral::{
    degree_stats, laplacian_ratio, normalize_symmetric, verify_eigen_relation, DegreeReport,
    EigenRelationReport, LaplacianRatio,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigenvalues [{min}, {max}] fall outside [-1, 1]")]
    SpectrumOutOfRange { min: f64, max: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("nodes {0:?} have non-positive degree")]
    ZeroDegree(Vec<usize>),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl GraphError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GraphError::NoConvergence(_) | GraphError::SpectrumOutOfRange { .. }
        )
    }
}

impl From<ShapeError> for GraphError {
    fn from(e: ShapeError) -> Self {
        GraphError::DimensionMismatch(e.message().to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionMode {
    #[default]
    ExactPowerSum,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Teleport weight `β ∈ (0, 1]`.
    pub beta: f64,
    /// Highest power kept by the exact power sum.
    pub hops: usize,
    #[serde(default)]
    pub mode: DiffusionMode,
    /// Recursion steps `K` for the iterative mode.
    #[serde(default)]
    pub iterations: usize,
}

impl DiffusionConfig {
    pub fn exact(beta: f64, hops: usize) -> Self {
        Self {
            beta,
            hops,
            mode: DiffusionMode::ExactPowerSum,
            iterations: 0,
        }
    }

    pub fn iterative(beta: f64, iterations: usize) -> Self {
        Self {
            beta,
            hops: 0,
            mode: DiffusionMode::Iterative,
            iterations,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(GraphError::InvalidConfig(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Hop weight `ω_i = β (1 − β)^i`.
#[inline]
pub fn omega(beta: f64, i: usize) -> f64 {
    beta * (1.0 - beta).powi(i as i32)
}

/// Parameters of one attention layer over `C` input channels reduced to `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Shared topology `Ȧ` (V × V).
    pub shared: Matrix,
    /// Refinement weight `γ`.
    pub gamma: f64,
    /// Query projection (C × R).
    pub w_q: Matrix,
    /// Key projection (C × R).
    pub w_k: Matrix,
    /// Channel reduction `R → 1`.
    pub w3: Vec<f64>,
}

impl AttentionParams {
    pub fn reduce_dim(&self) -> usize {
        self.w3.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionStack {
    /// Per-channel difference attention `Ã` (R matrices of V × V).
    pub a_tilde: Vec<Matrix>,
    /// Refined one-hop attention `Ā`.
    pub a_bar: Matrix,
    /// Multi-hop attention `𝒜̄`, once diffused.
    pub a_script: Option<Matrix>,
}

impl AttentionStack {
    pub fn diffuse(&mut self, cfg: &DiffusionConfig) -> Result<&Matrix, GraphError> {
        let m = multi_hop_exact(&self.a_bar, cfg)?;
        Ok(self.a_script.insert(m))
    }
}

/// Symmetric-normalized adjacency with self-loops, `D^{-1/2} (A + I) D^{-1/2}`.
pub fn normalized_adjacency(bones: &BoneMatrix) -> Matrix {
    let a = bones
        .adjacency()
        .add(&Matrix::identity(bones.joints()))
        .expect("square");
    let d: Vec<f64> = a.row_sums().iter().map(|s| 1.0 / s.sqrt()).collect();
    let mut out = a;
    let v = bones.joints();
    for i in 0..v {
        for j in 0..v {
            out[(i, j)] *= d[i] * d[j];
        }
    }
    out
}

/// Root, centripetal and centrifugal partitions of the physical graph.
/// Centripetal rows collect from joints further from the base.
pub fn spatial_partitions(bones: &BoneMatrix) -> [Matrix; 3] {
    let v = bones.joints();
    let mut inward = Matrix::zeros(v, v);
    let mut outward = Matrix::zeros(v, v);
    for (s, t) in bones.pairs() {
        inward[(s, t)] = 1.0;
        outward[(t, s)] = 1.0;
    }
    [Matrix::identity(v), inward, outward]
}

/// Reference graph convolution `Σ_s Λ_s^{-1/2} A_s Λ_s^{-1/2} F W_s` with
/// `Λ_s[i][i] = Σ_j A_s[i][j] + α`.
pub fn gc_baseline(
    features: &Matrix,
    partitions: &[Matrix],
    weights: &[Matrix],
    alpha: f64,
) -> Result<Matrix, GraphError> {
    if partitions.is_empty() || partitions.len() != weights.len() {
        return Err(GraphError::DimensionMismatch(format!(
            "{} partitions but {} weight matrices",
            partitions.len(),
            weights.len()
        )));
    }
    let v = features.rows();
    let c_out = weights[0].cols();
    let mut out = Matrix::zeros(v, c_out);
    for (a, w) in partitions.iter().zip(weights) {
        if a.shape() != (v, v) {
            return Err(GraphError::DimensionMismatch(format!(
                "partition is {}x{}, expected {v}x{v}",
                a.rows(),
                a.cols()
            )));
        }
        let lambda: Vec<f64> = a.row_sums().iter().map(|s| s + alpha).collect();
        if let Some(i) = lambda.iter().position(|&l| l <= 0.0) {
            return Err(GraphError::DomainError(format!(
                "row {i} has non-positive normalizer"
            )));
        }
        let mut norm = a.clone();
        for i in 0..v {
            for j in 0..v {
                norm[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
            }
        }
        let term = norm.matmul(&features.matmul(w)?)?;
        out.axpy(1.0, &term)?;
    }
    Ok(out)
}

/// One-hop attention from temporally pooled node features `F` (V × C):
/// `M = F W_q`, `N = F W_k`, `Ã[r][i][j] = tanh(M[i][r] − N[j][r])`,
/// `Ā = Ȧ + γ Σ_r W3[r] Ã[r]`.
pub fn one_hop_attention(
    features: &Matrix,
    params: &AttentionParams,
) -> Result<AttentionStack, GraphError> {
    let v = features.rows();
    let r = params.reduce_dim();
    if params.shared.shape() != (v, v) {
        return Err(GraphError::DimensionMismatch(format!(
            "shared topology is {}x{}, expected {v}x{v}",
            params.shared.rows(),
            params.shared.cols()
        )));
    }
    if params.w_q.shape() != (features.cols(), r) || params.w_k.shape() != (features.cols(), r) {
        return Err(GraphError::DimensionMismatch(format!(
            "projections must be {}x{r}",
            features.cols()
        )));
    }
    let m = features.matmul(&params.w_q)?;
    let n = features.matmul(&params.w_k)?;
    let mut a_tilde = Vec::with_capacity(r);
    let mut a_bar = params.shared.clone();
    for ch in 0..r {
        let mut at = Matrix::zeros(v, v);
        for i in 0..v {
            for j in 0..v {
                at[(i, j)] = (m[(i, ch)] - n[(j, ch)]).tanh();
            }
        }
        a_bar.axpy(params.gamma * params.w3[ch], &at)?;
        a_tilde.push(at);
    }
    Ok(AttentionStack {
        a_tilde,
        a_bar,
        a_script: None,
    })
}

fn check_square(a: &Matrix) -> Result<(), GraphError> {
    if !a.is_square() {
        return Err(GraphError::DimensionMismatch(format!(
            "attention must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Truncated power sum `Σ_{i=0..k} ω_i Ā^i`, accumulated in ascending `i`.
pub fn multi_hop_exact(a_bar: &Matrix, cfg: &DiffusionConfig) -> Result<Matrix, GraphError> {
    cfg.validate()?;
    check_square(a_bar)?;
    let v = a_bar.rows();
    let mut power = Matrix::identity(v);
    let mut sum = Matrix::identity(v).scale(omega(cfg.beta, 0));
    for i in 1..=cfg.hops {
        power = power.matmul(a_bar)?;
        sum.axpy(omega(cfg.beta, i), &power)?;
    }
    Ok(sum)
}

/// `K` steps of `E ← (1 − β) Ā E + β F` from `E = F`.
pub fn diffuse_iterative(
    a_bar: &Matrix,
    features: &Matrix,
    cfg: &DiffusionConfig,
) -> Result<Matrix, GraphError> {
    cfg.validate()?;
    check_square(a_bar)?;
    let mut e = features.clone();
    for _ in 0..cfg.iterations {
        let mut next = a_bar.matmul(&e)?.scale(1.0 - cfg.beta);
        next.axpy(cfg.beta, features)?;
        e = next;
    }
    Ok(e)
}

/// Diffuses `F` according to `cfg.mode`.
pub fn diffuse(
    a_bar: &Matrix,
    features: &Matrix,
    cfg: &DiffusionConfig,
) -> Result<Matrix, GraphError> {
    match cfg.mode {
        DiffusionMode::ExactPowerSum => Ok(multi_hop_exact(a_bar, cfg)?.matmul(features)?),
        DiffusionMode::Iterative => diffuse_iterative(a_bar, features, cfg),
    }
}

/// `ReLU(𝒜̄ F W4)`
pub fn aggregate(a_script: &Matrix, features: &Matrix, w4: &Matrix) -> Result<Matrix, GraphError> {
    Ok(a_script.matmul(&features.matmul(w4)?)?.map(|x| x.max(0.0)))
}
