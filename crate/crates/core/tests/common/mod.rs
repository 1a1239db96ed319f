//! Dense reference implementations, written directly from the definitions and
//! sharing no code with the library beyond its data types.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Largest singular value from the eigenvalues of `AᵀA`.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    nalgebra::SymmetricEigen::new(g).eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v)).max(0.0).sqrt()
}

pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    nalgebra::SymmetricEigen::new(g).eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v)).max(0.0).sqrt()
}

/// Singular values sorted in decreasing order (Jacobi-free: via the eigenvalues of `AᵀA`).
pub fn svals(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = nalgebra::SymmetricEigen::new(a.transpose() * a)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Random blocks with `sum_k ||A_k||_op = total`.
pub fn random_blocks(rng: &mut ChaCha8Rng, p: usize, d: usize, total: f64) -> Vec<DMatrix<f64>> {
    let raw: Vec<DMatrix<f64>> = (0..p).map(|_| gaussian(rng, d, d)).collect();
    let s: f64 = raw.iter().map(op_norm).sum();
    raw.into_iter().map(|b| b * (total / s)).collect()
}

/// `M_A` entry by entry: block `(i, j)` is `A_{i-j}` when `1 <= i-j <= p`.
pub fn dense_m(blocks: &[DMatrix<f64>], t: usize) -> DMatrix<f64> {
    let d = blocks[0].nrows();
    let mut m = DMatrix::zeros(t * d, t * d);
    for bi in 0..t {
        for bj in 0..bi {
            let lag = bi - bj;
            if lag <= blocks.len() {
                for r in 0..d {
                    for c in 0..d {
                        m[(bi * d + r, bj * d + c)] = blocks[lag - 1][(r, c)];
                    }
                }
            }
        }
    }
    m
}

/// `L★ = (I - M)^{-1}` by explicit inversion.
pub fn dense_l(blocks: &[DMatrix<f64>], t: usize) -> DMatrix<f64> {
    let n = t * blocks[0].nrows();
    (DMatrix::identity(n, n) - dense_m(blocks, t)).try_inverse().expect("unit lower triangular")
}

/// Direct recursion for one trajectory of stacked noise.
pub fn naive_simulate(blocks: &[DMatrix<f64>], noise: &[f64], d: usize) -> Vec<f64> {
    let t_len = noise.len() / d;
    let mut x = vec![0.0; noise.len()];
    for t in 0..t_len {
        for i in 0..d {
            let mut v = noise[t * d + i];
            for (k, a) in blocks.iter().enumerate() {
                if k + 1 > t {
                    break;
                }
                let s = t - k - 1;
                for j in 0..d {
                    v += a[(i, j)] * x[s * d + j];
                }
            }
            x[t * d + i] = v;
        }
    }
    x
}

/// `(1/NT) ||(I - M_A) X||_F^2` restricted to rows `t >= first` (one-based).
pub fn dense_loss(blocks: &[DMatrix<f64>], x: &DMatrix<f64>, t: usize, first: usize) -> f64 {
    let d = blocks[0].nrows();
    let n = x.ncols();
    let resid = x - dense_m(blocks, t) * x;
    let mut s = 0.0;
    for row in (first - 1) * d..t * d {
        for c in 0..n {
            s += resid[(row, c)].powi(2);
        }
    }
    s / (n * t) as f64
}

/// Dataset columns as a `T·d × N` matrix.
pub fn stacked(data: &[f64], n: usize, t: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(t * d, n, data)
}

pub fn concat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d = blocks[0].nrows();
    let mut out = DMatrix::zeros(d, d * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((0, k * d), (d, d)).copy_from(b);
    }
    out
}

fn rot(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// `R(θ1) diag(s1, s2) R(θ2)`; singular values are `|s1|, |s2|`.
pub fn compose_2x2(q: [f64; 4]) -> DMatrix<f64> {
    rot(q[0]) * DMatrix::from_row_slice(2, 2, &[q[2], 0.0, 0.0, q[3]]) * rot(q[1])
}

/// Minimizes `f` over parameters `[θ1, θ2, s1, s2]` with `|s_i| <= smax`:
/// exhaustive grid, then a shrinking compass search from the best few points.
pub fn grid_min_2x2(f: impl Fn(&DMatrix<f64>, [f64; 4]) -> f64, smax: f64) -> (f64, DMatrix<f64>) {
    let (angles, levels) = (16, 10);
    let pi = std::f64::consts::PI;
    let mut pts: Vec<(f64, [f64; 4])> = Vec::new();
    for a in 0..angles {
        for b in 0..angles {
            for i in 0..=levels {
                for j in 0..=2 * levels {
                    let q = [
                        pi * a as f64 / angles as f64,
                        pi * b as f64 / angles as f64,
                        smax * i as f64 / levels as f64,
                        smax * (j as f64 - levels as f64) / levels as f64,
                    ];
                    pts.push((f(&compose_2x2(q), q), q));
                }
            }
        }
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let clamp = |q: [f64; 4]| [q[0], q[1], q[2].clamp(-smax, smax), q[3].clamp(-smax, smax)];
    let mut overall = (f64::INFINITY, [0.0; 4]);
    for &start in pts.iter().take(4) {
        let mut best = start;
        let mut step = [pi / angles as f64, pi / angles as f64, smax / levels as f64, smax / levels as f64];
        while step.iter().any(|&s| s > 1e-12) {
            let mut improved = false;
            for k in 0..4 {
                for sign in [1.0, -1.0] {
                    let mut q = best.1;
                    q[k] += sign * step[k];
                    let q = clamp(q);
                    let v = f(&compose_2x2(q), q);
                    if v < best.0 {
                        best = (v, q);
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut step {
                    *s *= 0.5;
                }
            }
        }
        if best.0 < overall.0 {
            overall = best;
        }
    }
    (overall.0, compose_2x2(overall.1))
}

/// Exact 2×2 nuclear norm: `(σ1 + σ2)^2 = ||A||_F^2 + 2|det A|`.
pub fn nuclear_2x2(a: &DMatrix<f64>) -> f64 {
    (a.norm_squared() + 2.0 * (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).abs()).sqrt()
}

pub fn nuclear(a: &DMatrix<f64>) -> f64 {
    svals(a).iter().sum()
}

pub fn random_range(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}
