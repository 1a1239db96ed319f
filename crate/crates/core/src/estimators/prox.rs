//! Projection and thresholding primitives.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, sorted_svd};

/// Frobenius projection of `[A_1 | ... | A_p']` onto `{||·||_op <= radius}`:
/// singular values are clipped at `radius`.
pub fn project_op_ball(blocks: &[DMatrix<f64>], radius: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius = {radius} must be > 0")));
    }
    let Some(first) = blocks.first() else {
        return Ok(Vec::new());
    };
    if radius.is_infinite() {
        return Ok(blocks.to_vec());
    }
    let d = first.nrows();
    let concat = linalg::concat_blocks(blocks, d);
    Ok(linalg::split_blocks(&project_matrix(&concat, radius), blocks.len()))
}

pub(crate) fn project_matrix(m: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    if radius.is_infinite() {
        return m.clone();
    }
    let svd = sorted_svd(m);
    if svd.s.first().is_none_or(|&s| s <= radius) {
        return m.clone();
    }
    let clipped: Vec<f64> = svd.s.iter().map(|&s| s.min(radius)).collect();
    svd.recompose(&clipped)
}

/// Best rank-`r` approximation of every block.
pub fn truncate_rank(blocks: &[DMatrix<f64>], r: usize) -> Result<Vec<DMatrix<f64>>> {
    if r == 0 {
        return Err(Error::invalid("rank must be >= 1"));
    }
    Ok(blocks
        .iter()
        .map(|b| {
            if r >= b.nrows().min(b.ncols()) {
                return b.clone();
            }
            let svd = sorted_svd(b);
            let kept: Vec<f64> = svd
                .s
                .iter()
                .enumerate()
                .map(|(i, &s)| if i < r { s } else { 0.0 })
                .collect();
            svd.recompose(&kept)
        })
        .collect())
}

/// Blockwise singular-value soft thresholding, the proximal map of
/// `tau * sum_k ||A_k||_*`.
pub fn svt_block(blocks: &[DMatrix<f64>], tau: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau = {tau} must be >= 0")));
    }
    if tau == 0.0 {
        return Ok(blocks.to_vec());
    }
    Ok(blocks
        .iter()
        .map(|b| {
            let svd = sorted_svd(b);
            let shrunk: Vec<f64> = svd.s.iter().map(|&s| (s - tau).max(0.0)).collect();
            svd.recompose(&shrunk)
        })
        .collect())
}

/// Numerical rank with threshold `rel_tol * σ_1`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = linalg::singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    #[test]
    fn scalar_clip() {
        let out = project_op_ball(&[DMatrix::from_element(1, 1, 3.0)], 2.0).unwrap();
        assert_relative_eq!(out[0][(0, 0)], 2.0, epsilon = 1e-14);
        let out = project_op_ball(&[DMatrix::from_element(1, 1, -3.0)], 2.0).unwrap();
        assert_relative_eq!(out[0][(0, 0)], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn inside_ball_unchanged() {
        let a = vec![diag(0.5, 0.2), diag(0.1, 0.3)];
        assert_eq!(project_op_ball(&a, 2.0).unwrap(), a);
        assert!(project_op_ball(&a, 0.0).is_err());
    }

    #[test]
    fn diagonal_projection() {
        let out = project_op_ball(&[diag(3.0, 1.0)], 2.0).unwrap();
        assert!((&out[0] - diag(2.0, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn truncation_examples() {
        let out = truncate_rank(&[diag(3.0, 1.0)], 1).unwrap();
        assert!((&out[0] - diag(3.0, 0.0)).amax() < 1e-12);
        let a = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])];
        assert_eq!(truncate_rank(&a, 2).unwrap(), a);
        assert!(truncate_rank(&a, 0).is_err());
    }

    #[test]
    fn soft_threshold_value() {
        let out = svt_block(&[diag(0.7, 0.1)], 0.2).unwrap();
        let s = linalg::singular_values(&out[0]);
        assert_relative_eq!(s[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-12);
        let a = vec![diag(0.7, 0.1)];
        assert_eq!(svt_block(&a, 0.0).unwrap(), a);
        assert!(svt_block(&a, -1.0).is_err());
    }

    #[test]
    fn rank_counting() {
        assert_eq!(numerical_rank(&diag(1.0, 1e-14), 1e-12), 1);
        assert_eq!(numerical_rank(&diag(0.0, 0.0), 1e-12), 0);
    }
}
