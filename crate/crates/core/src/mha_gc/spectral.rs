//! Spectral checks on attention matrices.
//!
//! For symmetric `Ā` with spectrum in `[-1, 1]`, the full power sum shares
//! the eigenvectors of `Ā` and maps each eigenvalue through
//! `λ ↦ β / (1 − (1 − β) λ)`. Truncating after `k` hops moves each
//! eigenvalue by at most `(1 − β)^{k+1}`.

use serde::Serialize;

use super::{multi_hop_exact, symmetric_eigen, DiffusionConfig, GraphError};
use crate::linalg::Matrix;

const SPECTRUM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenRelationReport {
    pub beta: f64,
    pub hops: usize,
    /// Eigenvalues of `Ā`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `β / (1 − (1 − β) λ)` for each eigenvalue, ascending.
    pub predicted: Vec<f64>,
    /// Eigenvalues of the truncated power sum, ascending.
    pub observed: Vec<f64>,
    /// Largest gap between matched entries of `predicted` and `observed`.
    pub max_eig_residual: f64,
    /// Largest `‖𝒜̄ u − λ̄ u‖∞` over unit eigenvectors `u` of `Ā`.
    pub max_eigvec_residual: f64,
    /// `(1 − β)^{k+1}`
    pub truncation_bound: f64,
}

fn check_beta(beta: f64, inclusive_one: bool) -> Result<(), GraphError> {
    let ok = beta > 0.0 && (beta < 1.0 || (inclusive_one && beta == 1.0));
    if !ok {
        return Err(GraphError::DomainError(format!("beta {beta} out of range")));
    }
    Ok(())
}

/// Checks the eigenvalue relation between a symmetric `Ā` and its
/// `k`-hop power sum.
pub fn verify_eigen_relation(
    a_bar: &Matrix,
    beta: f64,
    hops: usize,
) -> Result<EigenRelationReport, GraphError> {
    check_beta(beta, true)?;
    let eig = symmetric_eigen(a_bar)?;
    let (lo, hi) = (eig.values[0], *eig.values.last().expect("non-empty"));
    if lo < -1.0 - SPECTRUM_SLACK || hi > 1.0 + SPECTRUM_SLACK {
        return Err(GraphError::SpectrumOutOfRange { min: lo, max: hi });
    }
    let a_script = multi_hop_exact(a_bar, &DiffusionConfig::exact(beta, hops))?;
    let observed = symmetric_eigen(&a_script.symmetrized()?)?.values;

    let map = |l: f64| beta / (1.0 - (1.0 - beta) * l);
    let mut predicted: Vec<f64> = eig.values.iter().map(|&l| map(l)).collect();
    predicted.sort_by(f64::total_cmp);
    let max_eig_residual = predicted
        .iter()
        .zip(&observed)
        .map(|(p, o)| (p - o).abs())
        .fold(0.0, f64::max);

    let n = a_bar.rows();
    let mut max_eigvec_residual: f64 = 0.0;
    for (col, &l) in eig.values.iter().enumerate() {
        let want = map(l);
        for i in 0..n {
            let mut au = 0.0;
            for j in 0..n {
                au += a_script[(i, j)] * eig.vectors[(j, col)];
            }
            max_eigvec_residual =
                max_eigvec_residual.max((au - want * eig.vectors[(i, col)]).abs());
        }
    }

    Ok(EigenRelationReport {
        beta,
        hops,
        eigenvalues: eig.values,
        predicted,
        observed,
        max_eig_residual,
        max_eigvec_residual,
        truncation_bound: (1.0 - beta).powi(hops as i32 + 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplacianRatio {
    /// `λ̄G / λG`, or its limit `(1 − β) / β` at `λG = 0`.
    pub ratio: f64,
    /// Laplacian eigenvalue `λ̄G = 1 − λ̄` of the power sum.
    pub multi_hop_eigenvalue: f64,
    pub at_limit: bool,
}

/// Ratio between the Laplacian eigenvalues of the diffused and the one-hop
/// graph, computed from `λ = 1 − λG` through the eigenvalue map.
pub fn laplacian_ratio(lambda_g: f64, beta: f64) -> Result<LaplacianRatio, GraphError> {
    check_beta(beta, false)?;
    if !(0.0..=2.0).contains(&lambda_g) {
        return Err(GraphError::DomainError(format!(
            "Laplacian eigenvalue {lambda_g} outside [0, 2]"
        )));
    }
    if lambda_g == 0.0 {
        return Ok(LaplacianRatio {
            ratio: (1.0 - beta) / beta,
            multi_hop_eigenvalue: 0.0,
            at_limit: true,
        });
    }
    let lambda = 1.0 - lambda_g;
    let mapped = beta / (1.0 - (1.0 - beta) * lambda);
    let g = 1.0 - mapped;
    Ok(LaplacianRatio {
        ratio: g / lambda_g,
        multi_hop_eigenvalue: g,
        at_limit: false,
    })
}

/// `Q^{-1/2} S Q^{-1/2}` with `S = (Ā + Āᵀ) / 2` and `Q` the row sums of `S`.
pub fn normalize_symmetric(a_bar: &Matrix) -> Result<Matrix, GraphError> {
    let s = a_bar.symmetrized()?;
    let q = s.row_sums();
    let bad: Vec<usize> = (0..q.len()).filter(|&i| q[i] <= 0.0).collect();
    if !bad.is_empty() {
        return Err(GraphError::ZeroDegree(bad));
    }
    let d: Vec<f64> = q.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut out = s;
    let n = out.rows();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= d[i] * d[j];
        }
    }
    Ok(out.symmetrized()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeReport {
    /// Row sums of `Ā` as given.
    pub degrees: Vec<f64>,
    pub min_degree: f64,
    pub max_degree: f64,
    /// Nodes whose symmetrized degree is not positive.
    pub zero_degree: Vec<usize>,
    /// Extreme eigenvalues of [`normalize_symmetric`], when defined.
    pub normalized_eigen_range: Option<(f64, f64)>,
}

pub fn degree_stats(a_bar: &Matrix) -> Result<DegreeReport, GraphError> {
    if !a_bar.is_square() {
        return Err(GraphError::DimensionMismatch(format!(
            "attention must be square, got {}x{}",
            a_bar.rows(),
            a_bar.cols()
        )));
    }
    let degrees = a_bar.row_sums();
    let min_degree = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let max_degree = degrees.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (zero_degree, normalized_eigen_range) = match normalize_symmetric(a_bar) {
        Ok(n) => {
            let e = symmetric_eigen(&n)?;
            (Vec::new(), Some((e.values[0], *e.values.last().unwrap())))
        }
        Err(GraphError::ZeroDegree(nodes)) => (nodes, None),
        Err(e) => return Err(e),
    };
    Ok(DegreeReport {
        degrees,
        min_degree,
        max_degree,
        zero_degree,
        normalized_eigen_range,
    })
}
