use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, gemv_acc};
use crate::model::{Dataset, RangeMode};

fn check_blocks(blocks: &[DMatrix<f64>], ds: &Dataset) -> Result<usize> {
    let p = blocks.len();
    if p == 0 {
        return Err(Error::invalid("at least one block is required"));
    }
    if p > ds.horizon {
        return Err(Error::invalid(format!("p' = {p} exceeds T = {}", ds.horizon)));
    }
    if blocks.iter().any(|b| b.shape() != (ds.dim, ds.dim)) {
        return Err(Error::dims(format!("blocks must be {0}x{0}", ds.dim)));
    }
    Ok(p)
}

/// Residuals `x_t - sum_k A_k x_{t-k}` over the chosen range, trajectory by
/// trajectory, handed to `visit(n, t, residual)` with `t` one-based.
fn for_each_residual(
    blocks: &[DMatrix<f64>],
    ds: &Dataset,
    range: RangeMode,
    mut visit: impl FnMut(usize, usize, &[f64]),
) {
    let d = ds.dim;
    let first = range.first_step(blocks.len());
    let mut r = vec![0.0; d];
    let mut pred = vec![0.0; d];
    for n in 0..ds.num_seqs {
        let traj = ds.trajectory(n);
        for t in first..=ds.horizon {
            pred.fill(0.0);
            for (k, a) in blocks.iter().enumerate() {
                let lag = k + 1;
                if lag >= t {
                    break;
                }
                let s = t - lag;
                gemv_acc(a, &traj[(s - 1) * d..s * d], &mut pred);
            }
            let x = &traj[(t - 1) * d..t * d];
            for i in 0..d {
                r[i] = x[i] - pred[i];
            }
            visit(n, t, &r);
        }
    }
}

/// Square loss `(1/NT) sum_n sum_t ||x_t - sum_k A_k x_{t-k}||^2`.
pub fn loss(blocks: &[DMatrix<f64>], ds: &Dataset, range: RangeMode) -> Result<f64> {
    check_blocks(blocks, ds)?;
    let mut total = 0.0;
    for_each_residual(blocks, ds, range, |_, _, r| {
        total += r.iter().map(|v| v * v).sum::<f64>();
    });
    Ok(total / ds.tokens() as f64)
}

/// Gradient of [`loss`] as a `d × p'd` matrix; block `k` is
/// `-(2/NT) sum (x_t - sum_j A_j x_{t-j}) x_{t-k}^T`.
pub fn grad_loss(blocks: &[DMatrix<f64>], ds: &Dataset, range: RangeMode) -> Result<DMatrix<f64>> {
    let p = check_blocks(blocks, ds)?;
    let d = ds.dim;
    let mut g = DMatrix::zeros(d, p * d);
    let scale = -2.0 / ds.tokens() as f64;
    for_each_residual(blocks, ds, range, |n, t, r| {
        let traj = ds.trajectory(n);
        for k in 0..p {
            let lag = k + 1;
            if lag >= t {
                break;
            }
            let s = t - lag;
            let x = &traj[(s - 1) * d..s * d];
            for (j, &xj) in x.iter().enumerate() {
                let mut col = g.column_mut(k * d + j);
                for i in 0..d {
                    col[i] += scale * r[i] * xj;
                }
            }
        }
    });
    Ok(g)
}

/// Sufficient statistics of the square loss for a fixed `p'` and range:
/// with `z_t = (x_{t-1}, ..., x_{t-p'})`,
/// `NT·L(A) = sxx - 2 <A, cross> + <A gram, A>`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub p_student: usize,
    pub d: usize,
    /// `N·T`, the loss normalization in both range modes.
    pub tokens: f64,
    pub sxx: f64,
    /// `sum x_t z_t^T`, `d × p'd`.
    pub cross: DMatrix<f64>,
    /// `sum z_t z_t^T`, `p'd × p'd`.
    pub gram: DMatrix<f64>,
}

impl Moments {
    pub fn new(ds: &Dataset, p_student: usize, range: RangeMode) -> Result<Self> {
        if p_student == 0 || p_student > ds.horizon {
            return Err(Error::invalid(format!(
                "p' = {p_student} outside [1, T = {}]",
                ds.horizon
            )));
        }
        let d = ds.dim;
        let pd = p_student * d;
        let first = range.first_step(p_student);
        let rows = ds.horizon + 1 - first;
        let mut gram = DMatrix::zeros(pd, pd);
        let mut cross = DMatrix::zeros(d, pd);
        let mut sxx = 0.0;
        let mut z = DMatrix::zeros(rows, pd);
        let mut x = DMatrix::zeros(rows, d);
        for n in 0..ds.num_seqs {
            let traj = ds.trajectory(n);
            z.fill(0.0);
            for (row, t) in (first..=ds.horizon).enumerate() {
                for i in 0..d {
                    x[(row, i)] = traj[(t - 1) * d + i];
                }
                for k in 0..p_student {
                    let lag = k + 1;
                    if lag >= t {
                        break;
                    }
                    let s = t - lag;
                    for i in 0..d {
                        z[(row, k * d + i)] = traj[(s - 1) * d + i];
                    }
                }
            }
            sxx += x.iter().map(|v| v * v).sum::<f64>();
            gram.gemm_tr(1.0, &z, &z, 1.0);
            cross.gemm_tr(1.0, &x, &z, 1.0);
        }
        Ok(Moments {
            p_student,
            d,
            tokens: ds.tokens() as f64,
            sxx,
            cross,
            gram,
        })
    }

    /// Loss of the concatenated coefficients `a` (`d × p'd`).
    pub fn loss(&self, a: &DMatrix<f64>) -> f64 {
        let ag = a * &self.gram;
        let quad = ag.dot(a);
        let lin = self.cross.dot(a);
        ((self.sxx - 2.0 * lin + quad) / self.tokens).max(0.0)
    }

    pub fn grad(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (a * &self.gram - &self.cross) * (2.0 / self.tokens)
    }

    /// Lipschitz constant `2 λ_max(gram) / NT` of the gradient.
    pub fn lipschitz(&self) -> f64 {
        let lmax = nalgebra::SymmetricEigen::new(self.gram.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(0.0, f64::max);
        2.0 * lmax / self.tokens
    }
}

/// Group-nuclear norm `sum_k ||A_k||_*`.
pub fn group_nuclear_norm(blocks: &[DMatrix<f64>]) -> f64 {
    blocks
        .iter()
        .map(|b| linalg::singular_values(b).iter().sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> Dataset {
        Dataset::new(1, 2, 1, vec![1.0, 0.5]).unwrap()
    }

    #[test]
    fn hand_computed_loss() {
        let a = vec![DMatrix::from_element(1, 1, 0.5)];
        assert_relative_eq!(loss(&a, &tiny(), RangeMode::Full).unwrap(), 0.5);
        // From p' = 1 the range is identical.
        assert_relative_eq!(loss(&a, &tiny(), RangeMode::FromP).unwrap(), 0.5);
    }

    #[test]
    fn zero_predictor_loss() {
        let ds = Dataset::new(2, 3, 1, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let a = vec![DMatrix::zeros(1, 1); 2];
        assert_relative_eq!(loss(&a, &ds, RangeMode::Full).unwrap(), 16.0 / 6.0);
        // t = 2..3 only.
        assert_relative_eq!(loss(&a, &ds, RangeMode::FromP).unwrap(), 14.0 / 6.0);
    }

    #[test]
    fn zero_data_zero_gradient() {
        let ds = Dataset::new(2, 4, 2, vec![0.0; 16]).unwrap();
        let a = vec![DMatrix::identity(2, 2); 2];
        assert!(grad_loss(&a, &ds, RangeMode::Full).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moments_agree_with_direct_loss() {
        let data: Vec<f64> = (0..24).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
        let ds = Dataset::new(2, 6, 2, data).unwrap();
        let blocks = vec![
            DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.4, 0.3]),
            DMatrix::from_row_slice(2, 2, &[-0.3, 0.2, 0.0, 0.1]),
        ];
        for range in [RangeMode::Full, RangeMode::FromP] {
            let m = Moments::new(&ds, 2, range).unwrap();
            let a = linalg::concat_blocks(&blocks, 2);
            assert_relative_eq!(m.loss(&a), loss(&blocks, &ds, range).unwrap(), epsilon = 1e-12);
            let g1 = m.grad(&a);
            let g2 = grad_loss(&blocks, &ds, range).unwrap();
            assert!((g1 - g2).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let ds = tiny();
        assert!(loss(&[DMatrix::zeros(2, 2)], &ds, RangeMode::Full).is_err());
        assert!(loss(&vec![DMatrix::zeros(1, 1); 3], &ds, RangeMode::Full).is_err());
    }
}
