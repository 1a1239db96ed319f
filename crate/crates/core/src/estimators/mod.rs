//! The square loss, its gradient, and the fitting procedures built on it.

mod fit;
mod loss;
mod prox;

pub use fit::{
    check_erm_certificate, estimate_constrained, estimate_group_nuclear, estimate_low_rank, fit,
    lambda_max, ols, ErmCertificate, EstimateReport,
};
pub use loss::{grad_loss, group_nuclear_norm, loss, Moments};
pub use prox::{numerical_rank, project_op_ball, svt_block, truncate_rank};
