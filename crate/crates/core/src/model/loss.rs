use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub primary: f64,
    pub aux: f64,
    pub lambda: f64,
    /// `primary + lambda * aux`
    pub total: f64,
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|x| (x - top).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of `logits` against class `label`.
///
/// # Panics
/// If `label` is out of range.
pub fn aux_loss(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "label {label} out of range");
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|x| (x - top).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn total_loss(primary: f64, aux: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown {
        primary,
        aux,
        lambda,
        total: primary + lambda * aux,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    /// Per-sample sum of per-stream softmax scores.
    pub fused: Vec<Vec<f64>>,
    /// Argmax of `fused`, lowest index on ties.
    pub predictions: Vec<usize>,
}

/// Fuses streams of per-sample logits by summing their softmax scores.
pub fn ensemble_scores(streams: &[Vec<Vec<f64>>]) -> Result<Ensemble, ModelError> {
    let first = streams
        .first()
        .ok_or_else(|| ModelError::ShapeMismatch("no streams".into()))?;
    let n = first.len();
    let m = first.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(ModelError::ShapeMismatch(
            "streams need at least one class".into(),
        ));
    }
    for (s, stream) in streams.iter().enumerate() {
        if stream.len() != n {
            return Err(ModelError::ShapeMismatch(format!(
                "stream {s} has {} samples, expected {n}",
                stream.len()
            )));
        }
        if let Some(i) = stream.iter().position(|row| row.len() != m) {
            return Err(ModelError::ShapeMismatch(format!(
                "stream {s} sample {i} has {} logits, expected {m}",
                stream[i].len()
            )));
        }
    }
    let mut fused = vec![vec![0.0; m]; n];
    for stream in streams {
        for (acc, row) in fused.iter_mut().zip(stream) {
            for (a, p) in acc.iter_mut().zip(softmax(row)) {
                *a += p;
            }
        }
    }
    let predictions = fused
        .iter()
        .map(|row| {
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(Ensemble { fused, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        assert!((aux_loss(&[0.0; 5], 2) - 5f64.ln()).abs() < 1e-15);
        assert!(aux_loss(&[0.0, 20.0, 0.0], 1) < 1e-8);
        let want = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((aux_loss(&[1.0, 0.0], 0) - want).abs() < 1e-15);
        assert!((want - 0.31326).abs() < 1e-5);
        assert!(aux_loss(&[1000.0, -1000.0], 1).is_finite());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(1.0, 0.5, 0.2).total, 1.0 + 0.2 * 0.5);
        assert_eq!(total_loss(0.7, 3.0, 0.0).total, 0.7);
        let l5 = 5f64.ln();
        assert!((total_loss(l5, l5, 0.2).total - 1.93133).abs() < 1e-5);
    }

    #[test]
    fn ensemble_examples() {
        let e = ensemble_scores(&[vec![vec![2.0, 0.0]], vec![vec![0.0, 1.0]]]).unwrap();
        assert_eq!(e.predictions, vec![0]);
        assert!((e.fused[0][0] - 1.150).abs() < 1e-3);
        assert!((e.fused[0][1] - 0.850).abs() < 1e-3);

        let tie = ensemble_scores(&[vec![vec![1.0, 1.0, 0.0]]]).unwrap();
        assert_eq!(tie.predictions, vec![0]);

        assert!(ensemble_scores(&[]).is_err());
        assert!(ensemble_scores(&[vec![vec![1.0, 0.0]], vec![vec![1.0]]]).is_err());
        assert!(ensemble_scores(&[vec![vec![1.0]], vec![]]).is_err());
    }
}
