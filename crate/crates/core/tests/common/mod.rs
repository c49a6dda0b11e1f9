//! Oracles and generators shared by the integration tests and the
//! acceptance runner. Nothing here calls the library's solver.
#![allow(dead_code)]

use lsmm::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform features in [-2, 2], labels with both classes present.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (DenseMatrix, Vec<i8>) {
    let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut y: Vec<i8> = (0..m)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    y[0] = 1;
    y[1] = -1;
    (DenseMatrix::from_row_major(m, n, data).unwrap(), y)
}

pub fn rows(x: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..x.rows()).map(|i| x.row(i).to_vec()).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn gaussian(sigma: f64, d: f64) -> f64 {
    (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn centroid(x: &[Vec<f64>], y: &[i8], label: i8) -> Vec<f64> {
    let members: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, l)| **l == label).map(|(r, _)| r).collect();
    let mut c = vec![0.0; x[0].len()];
    for r in &members {
        for (ci, v) in c.iter_mut().zip(r.iter()) {
            *ci += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= members.len() as f64);
    c
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        assert!(a[k][k].abs() > 1e-300, "oracle system singular");
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

pub struct KktSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Unknown layout: [w (n) | b | ξ (m) | α (m)].
fn unpack(z: Vec<f64>, n: usize, m: usize) -> KktSolution {
    KktSolution {
        w: z[..n].to_vec(),
        b: z[n],
        xi: z[n + 1..n + 1 + m].to_vec(),
        alpha: z[n + 1 + m..].to_vec(),
    }
}

/// Stationarity of the weighted-memory Lagrangian with a linear kernel:
///   w - Σ α_i y_i x_i = 0
///   Σ α_i y_i = 0
///   γ ξ_k + λ y_k Σ_i y_i δ_ik - y_k Σ_i α_i y_i δ_ik = 0
///   y_i (⟨w, x_i⟩ + b + Σ_j y_j ξ_j δ_ij) = 1
pub fn kkt_wimm(x: &[Vec<f64>], y: &[i8], delta: &[Vec<f64>], gamma: f64, lambda: f64) -> KktSolution {
    let (m, n) = (x.len(), x[0].len());
    let size = n + 1 + 2 * m;
    let (ib, ixi, ial) = (n, n + 1, n + 1 + m);
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut a = vec![vec![0.0; size]; size];
    let mut r = vec![0.0; size];
    for d in 0..n {
        a[d][d] = 1.0;
        for i in 0..m {
            a[d][ial + i] = -yf[i] * x[i][d];
        }
    }
    for i in 0..m {
        a[n][ial + i] = yf[i];
    }
    for k in 0..m {
        let row = n + 1 + k;
        a[row][ixi + k] = gamma;
        let mut s = 0.0;
        for i in 0..m {
            a[row][ial + i] = -yf[k] * yf[i] * delta[i][k];
            s += yf[i] * delta[i][k];
        }
        r[row] = -lambda * yf[k] * s;
    }
    for i in 0..m {
        let row = n + 1 + m + i;
        for d in 0..n {
            a[row][d] = yf[i] * x[i][d];
        }
        a[row][ib] = yf[i];
        for j in 0..m {
            a[row][ixi + j] = yf[i] * yf[j] * delta[i][j];
        }
        r[row] = 1.0;
    }
    unpack(gauss_solve(a, r), n, m)
}

/// Stationarity of the maximum-impact Lagrangian with a linear kernel:
///   w - Σ α_i y_i x_i = 0
///   Σ α_i y_i = 0
///   γ ξ_i + λ δ_i - α_i δ_i = 0
///   y_i (⟨w, x_i⟩ + b) - 1 + ξ_i δ_i = 0
pub fn kkt_mimm(x: &[Vec<f64>], y: &[i8], deltas: &[f64], gamma: f64, lambda: f64) -> KktSolution {
    let (m, n) = (x.len(), x[0].len());
    let size = n + 1 + 2 * m;
    let (ib, ixi, ial) = (n, n + 1, n + 1 + m);
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut a = vec![vec![0.0; size]; size];
    let mut r = vec![0.0; size];
    for d in 0..n {
        a[d][d] = 1.0;
        for i in 0..m {
            a[d][ial + i] = -yf[i] * x[i][d];
        }
    }
    for i in 0..m {
        a[n][ial + i] = yf[i];
    }
    for i in 0..m {
        let row = n + 1 + i;
        a[row][ixi + i] = gamma;
        a[row][ial + i] = -deltas[i];
        r[row] = -lambda * deltas[i];
    }
    for i in 0..m {
        let row = n + 1 + m + i;
        for d in 0..n {
            a[row][d] = yf[i] * x[i][d];
        }
        a[row][ib] = yf[i];
        a[row][ixi + i] = deltas[i];
        r[row] = 1.0;
    }
    unpack(gauss_solve(a, r), n, m)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (p, q)| acc.max((p - q).abs()))
}

/// Median over points of the distance to their nearest other point.
pub fn median_nn_distance(x: &[Vec<f64>]) -> f64 {
    let mut nn: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, a)| {
            x.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| dist(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    nn[nn.len() / 2]
}
