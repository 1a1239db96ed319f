//! Small dense helpers shared by the operator and estimator code.

use nalgebra::DMatrix;

/// Thin SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

// nalgebra's bidiagonal SVD can return an inaccurate factorization for
// matrices with clustered singular values, so factorizations go through faer.
pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return SortedSvd {
            u: DMatrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v_t: DMatrix::zeros(0, m.ncols()),
        };
    }
    let svd = to_faer(m).thin_svd().expect("SVD of a finite matrix");
    let s = svd.S().column_vector();
    SortedSvd {
        u: from_faer(svd.U()),
        s: (0..k).map(|i| s[i]).collect(),
        v_t: from_faer(svd.V()).transpose(),
    }
}

impl SortedSvd {
    pub fn recompose(&self, s: &[f64]) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &sj) in s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * &self.v_t
    }
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().expect("SVD of a finite matrix")
}

/// Spectral norm of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value of a square dense matrix.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn frob_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// `y += A x` on raw slices.
#[inline]
pub fn gemv_acc(a: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (rows, cols) = a.shape();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.column(j);
        for (yi, aij) in y.iter_mut().zip(col.iter()) {
            *yi += aij * xj;
        }
    }
}

/// `y += A^T x` on raw slices.
#[inline]
pub fn gemv_t_acc(a: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (rows, cols) = a.shape();
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(y.len(), cols);
    for (j, yj) in y.iter_mut().enumerate() {
        let col = a.column(j);
        *yj += col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Assemble blocks left to right into the `d × p·d` matrix.
pub fn concat_blocks(blocks: &[DMatrix<f64>], d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((0, k * d), (d, d)).copy_from(b);
    }
    out
}

/// Inverse of [`concat_blocks`].
pub fn split_blocks(concat: &DMatrix<f64>, p: usize) -> Vec<DMatrix<f64>> {
    let d = concat.nrows();
    (0..p)
        .map(|k| concat.view((0, k * d), (d, d)).into_owned())
        .collect()
}

pub fn blocks_frob_dist_sq(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| frob_sq(&(x - y))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_svd_reconstructs() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let svd = sorted_svd(&m);
        assert!(svd.s[0] >= svd.s[1]);
        let back = svd.recompose(&svd.s);
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn gemv_helpers_match_nalgebra() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut y = vec![1.0, 1.0];
        gemv_acc(&a, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.0, -1.0]);
        let mut z = vec![0.0; 3];
        gemv_t_acc(&a, &[1.0, 1.0], &mut z);
        assert_eq!(z, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn concat_split_roundtrip() {
        let blocks = vec![DMatrix::from_element(2, 2, 1.0), DMatrix::identity(2, 2)];
        let c = concat_blocks(&blocks, 2);
        assert_eq!(c.shape(), (2, 4));
        assert_eq!(split_blocks(&c, 2), blocks);
    }
}
