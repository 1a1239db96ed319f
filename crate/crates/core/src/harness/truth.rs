//! Ground-truth systems and student initializations.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sorted_svd;
use crate::model::ARModel;
use crate::rng::{self, Domain};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_ALPHA_INIT: f64 = 1.0;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub p: usize,
    pub d: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Rank of every block; `None` keeps full rank.
    #[serde(default)]
    pub rank: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl GroundTruthSpec {
    pub fn new(p: usize, d: usize, seed: u64) -> Self {
        GroundTruthSpec { p, d, alpha: DEFAULT_ALPHA, rank: None, seed, sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d == 0 {
            return Err(Error::invalid("p and d must be >= 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha = {} must be > 0", self.alpha)));
        }
        if let Some(r) = self.rank {
            if r == 0 || r >= self.d {
                return Err(Error::invalid(format!("rank = {r} outside [1, d = {})", self.d)));
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::NegativeSigma(self.sigma));
        }
        Ok(())
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` moved into `Q`.
pub fn haar_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `count` blocks `(alpha / count) Q_k`, block `k` drawn from stream `k` of `domain`.
fn scaled_orthogonal(count: usize, d: usize, alpha: f64, seed: u64, domain: Domain) -> Vec<DMatrix<f64>> {
    let scale = alpha / count as f64;
    (0..count)
        .map(|k| {
            let mut rng = rng::stream(seed, domain, k as u64);
            haar_orthogonal(d, &mut rng) * scale
        })
        .collect()
}

/// `A_k = (alpha/p) Q_k` with Haar `Q_k`, so `sum_k ||A_k||_op = alpha`.
/// With a rank, the trailing `d - r` singular values of every block are zeroed.
pub fn generate_ground_truth(spec: &GroundTruthSpec) -> Result<ARModel> {
    spec.validate()?;
    let mut blocks = scaled_orthogonal(spec.p, spec.d, spec.alpha, spec.seed, Domain::GroundTruth);
    if let Some(r) = spec.rank {
        for b in &mut blocks {
            let svd = sorted_svd(b);
            let s: Vec<f64> = svd.s.iter().enumerate().map(|(i, &v)| if i < r { v } else { 0.0 }).collect();
            *b = svd.recompose(&s);
        }
    }
    ARModel::new(blocks, spec.sigma)
}

/// Student initialization: `p'` blocks `(alpha/p') Q_k`.
pub fn student_init(p_student: usize, d: usize, alpha: f64, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if p_student == 0 || d == 0 {
        return Err(Error::invalid("p' and d must be >= 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha = {alpha} must be > 0")));
    }
    Ok(scaled_orthogonal(p_student, d, alpha, seed, Domain::StudentInit))
}
