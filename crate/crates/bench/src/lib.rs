//! Seeded inputs shared by the benchmarks.

use kinegraph::{CandidateScores, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-stochastic `D⁻¹S` for a random symmetric positive `S`.
pub fn random_attention(v: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Matrix::zeros(v, v);
    for i in 0..v {
        for j in i..v {
            let x: f64 = rng.gen_range(0.01..1.0);
            s.row_mut(i)[j] = x;
            s.row_mut(j)[i] = x;
        }
    }
    for i in 0..v {
        let d: f64 = s.row(i).iter().sum();
        s.row_mut(i).iter_mut().for_each(|x| *x /= d);
    }
    s
}

pub fn random_symmetric(v: usize, seed: u64) -> Matrix {
    random_attention(v, seed).symmetrized().expect("square")
}

pub fn random_features(v: usize, c: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..v * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(v, c, data).expect("sized")
}

pub fn random_scores(v: usize, seed: u64) -> CandidateScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..v * v).map(|_| rng.gen_range(0.0..1.0)).collect();
    CandidateScores::from_upper(v, |i, j| vals[i * v + j]).expect("valid scores")
}
