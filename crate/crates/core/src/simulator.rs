//! Seeded trajectory generation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::gemv_acc;
use crate::model::{validate_model, ARModel, Dataset, NoiseFamily, NoiseSpec, NoiseTensor};
use crate::rng::{self, Domain};

/// Draws the `T·d × N` noise matrix. Column `n` comes from its own stream
/// (see [`crate::rng`]), filled in `(t, i)` order.
pub fn sample_noise(spec: &NoiseSpec, n: usize, t: usize, d: usize, seed: u64) -> Result<NoiseTensor> {
    if n == 0 || t == 0 || d == 0 {
        return Err(Error::invalid("N, T and d must be >= 1"));
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::NegativeSigma(spec.sigma));
    }
    let len = t * d;
    let mut values = vec![0.0; len * n];
    if spec.sigma > 0.0 {
        values
            .par_chunks_mut(len)
            .enumerate()
            .for_each(|(col, out)| fill_column(spec, seed, col as u64, out));
    }
    NoiseTensor::new(t, d, DMatrix::from_vec(len, n, values))
}

fn fill_column(spec: &NoiseSpec, seed: u64, col: u64, out: &mut [f64]) {
    let mut rng = rng::stream(seed, Domain::Noise, col);
    let sigma = spec.sigma;
    match spec.family {
        NoiseFamily::Gaussian => {
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sigma * z;
            }
        }
        NoiseFamily::Rademacher => {
            for v in out.iter_mut() {
                *v = if rng.random::<bool>() { sigma } else { -sigma };
            }
        }
        NoiseFamily::Uniform => {
            let half = sigma * 3f64.sqrt();
            for v in out.iter_mut() {
                // random::<f64>() is uniform on [0, 1).
                *v = half * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
}

/// Runs the recursion `x_t = sum_{k=1}^{min(t-1,p)} A_k x_{t-k} + xi_t` for
/// every noise column.
pub fn simulate_from_noise(m: &ARModel, e: &NoiseTensor) -> Result<Dataset> {
    validate_model(m)?;
    if e.dim != m.d {
        return Err(Error::dims(format!("noise dimension {} != model dimension {}", e.dim, m.d)));
    }
    if e.horizon == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let (t_len, d) = (e.horizon, e.dim);
    let len = t_len * d;
    let mut data = vec![0.0; len * e.num_seqs];
    data.par_chunks_mut(len).enumerate().for_each(|(n, out)| {
        out.copy_from_slice(e.column(n));
        run_recursion(&m.blocks, d, out);
    });
    Dataset::new(e.num_seqs, t_len, d, data)
}

/// In place: on entry `buf` holds stacked noise, on exit the stacked states.
fn run_recursion(blocks: &[nalgebra::DMatrix<f64>], d: usize, buf: &mut [f64]) {
    let t_len = buf.len() / d;
    for t in 1..t_len {
        let (past, rest) = buf.split_at_mut(t * d);
        let cur = &mut rest[..d];
        for (k, a) in blocks.iter().enumerate().take(t) {
            let lag = t - 1 - k;
            gemv_acc(a, &past[lag * d..(lag + 1) * d], cur);
        }
    }
}

/// `sample_noise` followed by `simulate_from_noise`; also returns the noise.
pub fn simulate(
    m: &ARModel,
    spec: &NoiseSpec,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<(Dataset, NoiseTensor)> {
    validate_model(m)?;
    let e = sample_noise(spec, n, t, m.d, seed)?;
    let mut ds = simulate_from_noise(m, &e)?;
    ds.seed = Some(seed);
    ds.noise = Some(*spec);
    Ok((ds, e))
}
