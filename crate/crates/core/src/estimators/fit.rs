use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::loss::{group_nuclear_norm, loss, Moments};
use super::prox::{project_matrix, svt_block, truncate_rank};
use crate::error::{Error, Result};
use crate::harness::student_init;
use crate::linalg::{self, sorted_svd};
use crate::model::{ARModel, Dataset, EstimatorConfig, EstimatorKind, InitStrategy, RangeMode};

/// Outcome of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    #[serde(with = "crate::io::serde_blocks")]
    pub blocks: Vec<DMatrix<f64>>,
    pub p_student: usize,
    /// Plain square loss `L(Â)`.
    pub final_loss: f64,
    /// Objective actually minimized (`L + λ·group-nuclear` for the prox fit).
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub step_size: Option<f64>,
    /// `L(Â) <= L(A★_{p'})`, filled by [`EstimateReport::attach_certificates`].
    pub certificate_vs_truth: Option<bool>,
    /// Measured surplus `L(Â) - L(reference)`.
    pub surplus_eps: Option<f64>,
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

impl EstimateReport {
    pub fn attach_certificates(
        &mut self,
        ds: &Dataset,
        range: RangeMode,
        truth: Option<&ARModel>,
        reference: Option<&[DMatrix<f64>]>,
    ) -> Result<()> {
        if let Some(truth) = truth {
            let star = truth.blocks_padded(self.p_student);
            self.certificate_vs_truth = Some(self.final_loss <= loss(&star, ds, range)?);
        }
        if let Some(reference) = reference {
            self.surplus_eps = Some(self.final_loss - loss(reference, ds, range)?);
        }
        Ok(())
    }
}

/// Fits `ds` according to `cfg.kind`.
pub fn fit(ds: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    cfg.validate(ds.dim)?;
    match cfg.kind {
        EstimatorKind::Ols => ols(ds, cfg.p_student, cfg.loss_range),
        EstimatorKind::ConstrainedPgd => estimate_constrained(ds, cfg.p_student, cfg.d_budget, cfg),
        EstimatorKind::IhtLowRank => {
            let r = cfg.r.ok_or_else(|| Error::invalid("iht_low_rank requires r"))?;
            estimate_low_rank(ds, cfg.p_student, r, cfg.d_budget, cfg)
        }
        EstimatorKind::GroupNuclearProx => estimate_group_nuclear(ds, cfg.p_student, cfg.lambda, cfg),
    }
}

/// Minimum-norm least squares: `A = cross · gram⁺`, singular values of the
/// Gram matrix below `1e-12 σ_1` are dropped.
pub fn ols(ds: &Dataset, p_student: usize, range: RangeMode) -> Result<EstimateReport> {
    let m = Moments::new(ds, p_student, range)?;
    let a = ols_from_moments(&m);
    let blocks = linalg::split_blocks(&a, p_student);
    let final_loss = loss(&blocks, ds, range)?;
    Ok(EstimateReport {
        kind: EstimatorKind::Ols,
        blocks,
        p_student,
        final_loss,
        objective: final_loss,
        iters: 1,
        converged: true,
        step_size: None,
        certificate_vs_truth: None,
        surplus_eps: None,
        objective_history: vec![final_loss],
    })
}

pub(crate) fn ols_from_moments(m: &Moments) -> DMatrix<f64> {
    let svd = sorted_svd(&m.gram);
    let top = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = 1e-12 * top;
    let inv: Vec<f64> = svd
        .s
        .iter()
        .map(|&s| if top > 0.0 && s > cutoff { 1.0 / s } else { 0.0 })
        .collect();
    let mut v_scaled = svd.v_t.transpose();
    for (j, &w) in inv.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(w);
    }
    let pinv = v_scaled * svd.u.transpose();
    &m.cross * pinv
}

fn initial_point(cfg: &EstimatorConfig, d: usize) -> Result<DMatrix<f64>> {
    let blocks = match cfg.init {
        InitStrategy::Zeros => vec![DMatrix::zeros(d, d); cfg.p_student],
        InitStrategy::ScaledOrthogonal { alpha, seed } => student_init(cfg.p_student, d, alpha, seed)?,
    };
    Ok(linalg::concat_blocks(&blocks, d))
}

fn resolve_step(cfg: &EstimatorConfig, m: &Moments) -> f64 {
    cfg.step_size.unwrap_or_else(|| {
        let lip = m.lipschitz();
        if lip > 0.0 {
            0.9 / lip
        } else {
            1.0
        }
    })
}

struct DescentOutcome {
    a: DMatrix<f64>,
    objective: f64,
    iters: usize,
    converged: bool,
    history: Vec<f64>,
}

/// `a ← prox(a - step ∇L(a))` until the relative objective change is below
/// `tol` or `max_iters` is reached. Stops early on a non-finite objective.
fn proximal_descent(
    m: &Moments,
    init: DMatrix<f64>,
    step: f64,
    cfg: &EstimatorConfig,
    penalty: impl Fn(&DMatrix<f64>) -> f64,
    prox: impl Fn(DMatrix<f64>) -> DMatrix<f64>,
) -> DescentOutcome {
    let mut a = prox(init);
    let mut obj = m.loss(&a) + penalty(&a);
    let mut history = vec![obj];
    for it in 1..=cfg.max_iters {
        let g = m.grad(&a);
        let next = prox(&a - g * step);
        let next_obj = m.loss(&next) + penalty(&next);
        history.push(next_obj);
        if !next_obj.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return DescentOutcome { a: next, objective: next_obj, iters: it, converged: false, history };
        }
        let change = (obj - next_obj).abs();
        a = next;
        let prev = obj;
        obj = next_obj;
        if change <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            return DescentOutcome { a, objective: obj, iters: it, converged: true, history };
        }
    }
    DescentOutcome { a, objective: obj, iters: cfg.max_iters, converged: false, history }
}

fn finish(
    kind: EstimatorKind,
    ds: &Dataset,
    cfg: &EstimatorConfig,
    step: f64,
    out: DescentOutcome,
) -> Result<EstimateReport> {
    let blocks = linalg::split_blocks(&out.a, cfg.p_student);
    let final_loss = if blocks.iter().all(|b| b.iter().all(|v| v.is_finite())) {
        loss(&blocks, ds, cfg.loss_range)?
    } else {
        f64::INFINITY
    };
    if !out.converged {
        log::debug!("{kind} stopped after {} iterations without meeting tol", out.iters);
    }
    Ok(EstimateReport {
        kind,
        blocks,
        p_student: cfg.p_student,
        final_loss,
        objective: out.objective,
        iters: out.iters,
        converged: out.converged,
        step_size: Some(step),
        certificate_vs_truth: None,
        surplus_eps: None,
        objective_history: out.history,
    })
}

/// Projected gradient descent over `{||[A_1|...|A_p']||_op <= D/sqrt(p')}`,
/// which guarantees `||M_A||_op <= D`.
pub fn estimate_constrained(
    ds: &Dataset,
    p_student: usize,
    budget: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    let cfg = EstimatorConfig { p_student, d_budget: budget, ..cfg.clone() };
    if !(budget >= 1.0) {
        return Err(Error::invalid(format!("D = {budget} must be >= 1")));
    }
    let m = Moments::new(ds, p_student, cfg.loss_range)?;
    let step = resolve_step(&cfg, &m);
    let radius = budget / (p_student as f64).sqrt();
    let init = initial_point(&cfg, ds.dim)?;
    let out = proximal_descent(&m, init, step, &cfg, |_| 0.0, |a| project_matrix(&a, radius));
    finish(EstimatorKind::ConstrainedPgd, ds, &cfg, step, out)
}

/// Iterative hard thresholding: gradient step, rank-`r` truncation of every
/// block, then projection onto the operator-norm ball.
pub fn estimate_low_rank(
    ds: &Dataset,
    p_student: usize,
    r: usize,
    budget: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    let cfg = EstimatorConfig { p_student, d_budget: budget, r: Some(r), ..cfg.clone() };
    if r == 0 || r > ds.dim {
        return Err(Error::invalid(format!("rank r = {r} outside [1, {}]", ds.dim)));
    }
    if !(budget >= 1.0) {
        return Err(Error::invalid(format!("D = {budget} must be >= 1")));
    }
    let m = Moments::new(ds, p_student, cfg.loss_range)?;
    let step = resolve_step(&cfg, &m);
    let radius = budget / (p_student as f64).sqrt();
    let init = initial_point(&cfg, ds.dim)?;
    let prox = |a: DMatrix<f64>| {
        let blocks = linalg::split_blocks(&a, p_student);
        let truncated = truncate_rank(&blocks, r).expect("r >= 1");
        project_matrix(&linalg::concat_blocks(&truncated, a.nrows()), radius)
    };
    let out = proximal_descent(&m, init, step, &cfg, |_| 0.0, prox);
    finish(EstimatorKind::IhtLowRank, ds, &cfg, step, out)
}

/// Proximal gradient on `L(A) + λ sum_k ||A_k||_*`, optionally followed by the
/// operator-norm projection when `cfg.project` is set.
pub fn estimate_group_nuclear(
    ds: &Dataset,
    p_student: usize,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    let cfg = EstimatorConfig { p_student, lambda, ..cfg.clone() };
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda = {lambda} must be >= 0")));
    }
    let m = Moments::new(ds, p_student, cfg.loss_range)?;
    let step = resolve_step(&cfg, &m);
    let radius = if cfg.project {
        cfg.d_budget / (p_student as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let init = initial_point(&cfg, ds.dim)?;
    let penalty = |a: &DMatrix<f64>| {
        if lambda == 0.0 {
            0.0
        } else {
            lambda * group_nuclear_norm(&linalg::split_blocks(a, p_student))
        }
    };
    let prox = |a: DMatrix<f64>| {
        let blocks = linalg::split_blocks(&a, p_student);
        let shrunk = svt_block(&blocks, step * lambda).expect("tau >= 0");
        project_matrix(&linalg::concat_blocks(&shrunk, a.nrows()), radius)
    };
    let out = proximal_descent(&m, init, step, &cfg, penalty, prox);
    finish(EstimatorKind::GroupNuclearProx, ds, &cfg, step, out)
}

/// Smallest `λ` for which zero is a fixed point of the proximal iteration:
/// `max_k ||∇_k L(0)||_op`.
pub fn lambda_max(ds: &Dataset, p_student: usize, range: RangeMode) -> Result<f64> {
    let m = Moments::new(ds, p_student, range)?;
    let g = m.grad(&DMatrix::zeros(ds.dim, p_student * ds.dim));
    Ok(linalg::split_blocks(&g, p_student)
        .iter()
        .map(linalg::spectral_norm)
        .fold(0.0, f64::max))
}

/// Checkable conditions under which an arbitrary estimate inherits the
/// minimizer's rates: `L(Ã) <= L(A★_{p'})` and `L(Ã) <= L(Â) + ε_tr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmCertificate {
    pub loss_estimate: f64,
    pub loss_truth: f64,
    /// `L(Ã) - L(A★_{p'})`.
    pub gap_truth: f64,
    pub beats_truth: bool,
    /// `L(Ã) - L(Â)` when a reference minimizer is given.
    pub gap_reference: Option<f64>,
    pub within_surplus: Option<bool>,
}

pub fn check_erm_certificate(
    a_tilde: &[DMatrix<f64>],
    ds: &Dataset,
    truth: &ARModel,
    eps_tr: f64,
    reference: Option<&[DMatrix<f64>]>,
    range: RangeMode,
) -> Result<ErmCertificate> {
    if truth.d != ds.dim {
        return Err(Error::dims("truth and dataset dimensions differ"));
    }
    let loss_estimate = loss(a_tilde, ds, range)?;
    let loss_truth = loss(&truth.blocks_padded(a_tilde.len()), ds, range)?;
    let gap_truth = loss_estimate - loss_truth;
    let gap_reference = match reference {
        Some(r) => Some(loss_estimate - loss(r, ds, range)?),
        None => None,
    };
    Ok(ErmCertificate {
        loss_estimate,
        loss_truth,
        gap_truth,
        beats_truth: gap_truth <= 0.0,
        gap_reference,
        within_surplus: gap_reference.map(|g| g <= eps_tr),
    })
}
