//! The prediction operator `M_A`, the data-generating operator `L★`, and the
//! scalar diagnostics derived from them.
//!
//! Stacked vectors have length `T·d`; block `t` (zero-based) occupies
//! `[t·d, (t+1)·d)`. `M_A` maps a stacked trajectory to its one-step
//! predictions, `L★ = (I - M_{A★})^{-1}` maps stacked noise to the stacked
//! trajectory. Both are available matrix-free and materialized.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, gemv_acc, gemv_t_acc};
use crate::model::{validate_model, ARModel};
use crate::rng::{self, Domain};

pub const DEFAULT_DENSE_CAP: usize = 1000;
pub const DEFAULT_STABILITY_MARGIN: f64 = 0.05;

/// A real linear map `R^{dim_in} -> R^{dim_out}` with its adjoint.
pub trait LinearMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    /// `y = A x` (`y` is overwritten).
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = A^T x` (`y` is overwritten).
    fn apply_t(&self, x: &[f64], y: &mut [f64]);

    /// Dense matrix obtained by applying the map to each basis vector.
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.dim_out(), self.dim_in());
        let mut out = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        out
    }
}

impl LinearMap for DMatrix<f64> {
    fn dim_in(&self) -> usize {
        self.ncols()
    }
    fn dim_out(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        gemv_acc(self, x, y);
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        gemv_t_acc(self, x, y);
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// `M_A` for blocks `A_1..A_{p'}` over a horizon `T`.
#[derive(Debug, Clone, Copy)]
pub struct PredictionOp<'a> {
    pub blocks: &'a [DMatrix<f64>],
    pub d: usize,
    pub horizon: usize,
}

impl<'a> PredictionOp<'a> {
    pub fn new(blocks: &'a [DMatrix<f64>], horizon: usize) -> Result<Self> {
        let d = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| Error::invalid("at least one block is required"))?;
        if blocks.iter().any(|b| b.shape() != (d, d)) {
            return Err(Error::dims("blocks must all be d x d"));
        }
        Ok(PredictionOp { blocks, d, horizon })
    }
}

impl LinearMap for PredictionOp<'_> {
    fn dim_in(&self) -> usize {
        self.horizon * self.d
    }
    fn dim_out(&self) -> usize {
        self.horizon * self.d
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        y.fill(0.0);
        for t in 1..self.horizon {
            let out = &mut y[t * d..(t + 1) * d];
            for (k, a) in self.blocks.iter().enumerate().take(t) {
                let s = t - 1 - k;
                gemv_acc(a, &x[s * d..(s + 1) * d], out);
            }
        }
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        y.fill(0.0);
        for s in 0..self.horizon {
            let out = &mut y[s * d..(s + 1) * d];
            for (k, a) in self.blocks.iter().enumerate() {
                let t = s + k + 1;
                if t >= self.horizon {
                    break;
                }
                gemv_t_acc(a, &x[t * d..(t + 1) * d], out);
            }
        }
    }
}

/// `I - M_A`.
#[derive(Debug, Clone, Copy)]
pub struct ResidualOp<'a>(pub PredictionOp<'a>);

impl LinearMap for ResidualOp<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_t(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    }
}

/// `M_A x` for a stacked vector `x` of length `T·d`.
pub fn apply_m(blocks: &[DMatrix<f64>], horizon: usize, v: &[f64]) -> Result<Vec<f64>> {
    let op = PredictionOp::new(blocks, horizon)?;
    if v.len() != op.dim_in() {
        return Err(Error::dims(format!("vector length {} != T*d = {}", v.len(), op.dim_in())));
    }
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out);
    Ok(out)
}

/// Dense `T·d × T·d` matrix with block `(i, j) = A_{i-j}` for `1 <= i - j <= p'`.
pub fn materialize_m(blocks: &[DMatrix<f64>], horizon: usize, cap: usize) -> Result<DMatrix<f64>> {
    let op = PredictionOp::new(blocks, horizon)?;
    let n = op.dim_in();
    if n > cap {
        return Err(Error::DenseCapExceeded { size: n, cap });
    }
    let d = op.d;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..horizon {
        for (k, a) in blocks.iter().enumerate() {
            let lag = k + 1;
            if lag > i {
                break;
            }
            let j = i - lag;
            out.view_mut((i * d, j * d), (d, d)).copy_from(a);
        }
    }
    Ok(out)
}

/// First block-column of `L★`; the full operator is lower-block-Toeplitz with
/// block `(i, j) = blocks[i - j]` for `i >= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LBlocks {
    pub horizon: usize,
    pub d: usize,
    pub blocks: Vec<DMatrix<f64>>,
}

/// `L^{(1)} = I`, `L^{(i)} = sum_{k=1}^{min(i-1, p)} A_k L^{(i-k)}`.
pub fn build_l_blocks(m: &ARModel, horizon: usize) -> Result<LBlocks> {
    validate_model(m)?;
    if horizon == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let d = m.d;
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
    blocks.push(DMatrix::identity(d, d));
    for i in 1..horizon {
        let mut acc = DMatrix::zeros(d, d);
        for (k, a) in m.blocks.iter().enumerate().take(i) {
            acc.gemm(1.0, a, &blocks[i - 1 - k], 1.0);
        }
        blocks.push(acc);
    }
    Ok(LBlocks { horizon, d, blocks })
}

impl LBlocks {
    pub fn materialize(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.horizon * self.d;
        if n > cap {
            return Err(Error::DenseCapExceeded { size: n, cap });
        }
        let d = self.d;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..self.horizon {
            for j in 0..=i {
                out.view_mut((i * d, j * d), (d, d)).copy_from(&self.blocks[i - j]);
            }
        }
        Ok(out)
    }

    /// Operator norms of the blocks, in order.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(linalg::spectral_norm).collect()
    }
}

impl LinearMap for LBlocks {
    fn dim_in(&self) -> usize {
        self.horizon * self.d
    }
    fn dim_out(&self) -> usize {
        self.horizon * self.d
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        y.fill(0.0);
        for t in 0..self.horizon {
            let out = &mut y[t * d..(t + 1) * d];
            for s in 0..=t {
                gemv_acc(&self.blocks[t - s], &x[s * d..(s + 1) * d], out);
            }
        }
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        y.fill(0.0);
        for s in 0..self.horizon {
            let out = &mut y[s * d..(s + 1) * d];
            for t in s..self.horizon {
                gemv_t_acc(&self.blocks[t - s], &x[t * d..(t + 1) * d], out);
            }
        }
    }
}

/// Lower-block-Toeplitz product `L★ v`.
pub fn apply_l(l: &LBlocks, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != l.dim_in() {
        return Err(Error::dims(format!("vector length {} != T*d = {}", v.len(), l.dim_in())));
    }
    let mut out = vec![0.0; v.len()];
    l.apply(v, &mut out);
    Ok(out)
}

/// `L★` applied by forward substitution through `I - M_{A★}` and its adjoint
/// by backward substitution; `O(T p d^2)` per application.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOp<'a>(pub PredictionOp<'a>);

impl LinearMap for GeneratorOp<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.0.d;
        y.copy_from_slice(x);
        for t in 1..self.0.horizon {
            let (past, rest) = y.split_at_mut(t * d);
            let cur = &mut rest[..d];
            for (k, a) in self.0.blocks.iter().enumerate().take(t) {
                let s = t - 1 - k;
                gemv_acc(a, &past[s * d..(s + 1) * d], cur);
            }
        }
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        // (I - M^T) y = x, solved from the last block backwards.
        let d = self.0.d;
        let horizon = self.0.horizon;
        y.copy_from_slice(x);
        for s in (0..horizon).rev() {
            let (head, future) = y.split_at_mut((s + 1) * d);
            let cur = &mut head[s * d..];
            for (k, a) in self.0.blocks.iter().enumerate() {
                let t = s + k + 1;
                if t >= horizon {
                    break;
                }
                let off = (t - s - 1) * d;
                gemv_t_acc(a, &future[off..off + d], cur);
            }
        }
    }
}

/// `B ∘ C` for two linear maps.
pub struct Composed<'a, B: LinearMap, C: LinearMap> {
    pub outer: &'a B,
    pub inner: &'a C,
}

impl<B: LinearMap, C: LinearMap> LinearMap for Composed<'_, B, C> {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.inner.dim_out()];
        self.inner.apply(x, &mut tmp);
        self.outer.apply(&tmp, y);
    }
    fn apply_t(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.outer.dim_in()];
        self.outer.apply_t(x, &mut tmp);
        self.inner.apply_t(&tmp, y);
    }
}

/// Result of a power-iteration norm estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNormEstimate {
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Largest singular value by power iteration on `A^T A`, started from a
/// fixed-seed random unit vector. Stops when the relative change of the
/// estimate drops below `tol`; otherwise returns the last estimate with
/// `converged = false`.
pub fn op_norm<L: LinearMap + ?Sized>(map: &L, tol: f64, max_iters: usize) -> Result<OpNormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be > 0"));
    }
    let n = map.dim_in();
    if n == 0 || map.dim_out() == 0 {
        return Ok(OpNormEstimate { value: 0.0, iters: 0, converged: true });
    }
    let mut rng = rng::stream(0, Domain::PowerIteration, n as u64);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; map.dim_out()];
    let mut u = vec![0.0; n];
    let mut sigma = 0.0f64;
    for it in 1..=max_iters {
        map.apply(&v, &mut w);
        let next = norm2(&w);
        if next == 0.0 {
            return Ok(OpNormEstimate { value: 0.0, iters: it, converged: true });
        }
        map.apply_t(&w, &mut u);
        let un = norm2(&u);
        if (next - sigma).abs() <= tol * next {
            return Ok(OpNormEstimate { value: next, iters: it, converged: true });
        }
        sigma = next;
        if un == 0.0 {
            return Ok(OpNormEstimate { value: sigma, iters: it, converged: true });
        }
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / un;
        }
    }
    log::warn!("power iteration did not converge in {max_iters} iterations");
    Ok(OpNormEstimate { value: sigma, iters: max_iters, converged: false })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// How operator norms are evaluated: dense SVD up to `dense_cap` rows,
/// power iteration above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormOptions {
    pub dense_cap: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            dense_cap: DEFAULT_DENSE_CAP,
            tol: 1e-8,
            max_iters: 10_000,
        }
    }
}

impl NormOptions {
    /// Always use power iteration.
    pub fn matrix_free(tol: f64, max_iters: usize) -> Self {
        NormOptions { dense_cap: 0, tol, max_iters }
    }

    pub fn norm<L: LinearMap + ?Sized>(&self, map: &L) -> Result<OpNormEstimate> {
        if map.dim_in().max(map.dim_out()) <= self.dense_cap {
            let value = linalg::spectral_norm(&map.to_dense());
            Ok(OpNormEstimate { value, iters: 0, converged: true })
        } else {
            op_norm(map, self.tol, self.max_iters)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub l_norm: f64,
    pub sigma_min: f64,
    pub kappa: f64,
    pub converged: bool,
}

/// `κ = ||L★||_op / σ_min(L★)` with `σ_min(L★) = 1 / ||I - M_{A★}||_op`.
pub fn condition_number(m: &ARModel, horizon: usize, opts: &NormOptions) -> Result<ConditionReport> {
    validate_model(m)?;
    if horizon == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let pred = PredictionOp::new(&m.blocks, horizon)?;
    let l_norm = opts.norm(&GeneratorOp(pred))?;
    let res_norm = opts.norm(&ResidualOp(pred))?;
    let sigma_min = 1.0 / res_norm.value;
    Ok(ConditionReport {
        l_norm: l_norm.value,
        sigma_min,
        kappa: (l_norm.value / sigma_min).max(1.0),
        converged: l_norm.converged && res_norm.converged,
    })
}

/// `ζ(T) = max_k ||L^{(k)}||_op` over the first block-column.
pub fn zeta(m: &ARModel, horizon: usize) -> Result<f64> {
    let l = build_l_blocks(m, horizon)?;
    Ok(l.block_norms().into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StrictlyStable,
    MarginallyStable,
    Explosive,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StrictlyStable => "strictly_stable",
            Stability::MarginallyStable => "marginally_stable",
            Stability::Explosive => "explosive",
        }
    }
}

/// Least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
}

pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Some(LineFit { slope, intercept, rss })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub label: Stability,
    /// Fitted exponential rate `ρ` from `log ||L^{(k)}|| ≈ a + k log ρ`.
    pub rho: f64,
    pub exponential_fit: Option<LineFit>,
    /// `log ||L^{(k)}|| ≈ b + m log k`; `m` is the polynomial degree.
    pub polynomial_fit: Option<LineFit>,
    pub degenerate: bool,
}

/// Empirical growth classification of the `L★` blocks. Fits use the tail
/// `k >= T/2`; `ρ < 1 - θ` is strictly stable, `ρ > 1 + θ` explosive.
pub fn classify_stability(m: &ARModel, horizon: usize, theta: f64) -> Result<StabilityReport> {
    if horizon < 8 {
        return Err(Error::InsufficientData(format!(
            "stability fit needs T >= 8, got {horizon}"
        )));
    }
    let norms = build_l_blocks(m, horizon)?.block_norms();
    let degenerate = StabilityReport {
        label: Stability::StrictlyStable,
        rho: 0.0,
        exponential_fit: None,
        polynomial_fit: None,
        degenerate: true,
    };
    if norms.iter().skip(1).all(|&v| v == 0.0) {
        return Ok(degenerate);
    }
    if norms.iter().any(|v| !v.is_finite()) {
        return Ok(StabilityReport {
            label: Stability::Explosive,
            rho: f64::INFINITY,
            exponential_fit: None,
            polynomial_fit: None,
            degenerate: true,
        });
    }
    let start = horizon.div_ceil(2);
    let (mut ks, mut logk, mut logn) = (Vec::new(), Vec::new(), Vec::new());
    for k in start..=horizon {
        let v = norms[k - 1];
        if v > 0.0 {
            ks.push(k as f64);
            logk.push((k as f64).ln());
            logn.push(v.ln());
        }
    }
    let Some(exp_fit) = fit_line(&ks, &logn) else {
        return Ok(degenerate);
    };
    let poly_fit = fit_line(&logk, &logn);
    let rho = exp_fit.slope.exp();
    let label = if rho < 1.0 - theta {
        Stability::StrictlyStable
    } else if rho > 1.0 + theta {
        Stability::Explosive
    } else {
        Stability::MarginallyStable
    };
    Ok(StabilityReport {
        label,
        rho,
        exponential_fit: Some(exp_fit),
        polynomial_fit: poly_fit,
        degenerate: false,
    })
}

/// Block companion matrix: identity blocks on the super-diagonal and last
/// block-row `[A_p, A_{p-1}, ..., A_1]`.
pub fn companion(m: &ARModel, cap: usize) -> Result<DMatrix<f64>> {
    validate_model(m)?;
    let (p, d) = (m.p, m.d);
    let n = p * d;
    if n > cap {
        return Err(Error::DenseCapExceeded { size: n, cap });
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 0..p - 1 {
        c.view_mut((i * d, (i + 1) * d), (d, d)).fill_with_identity();
    }
    for k in 0..p {
        c.view_mut(((p - 1) * d, (p - 1 - k) * d), (d, d)).copy_from(&m.blocks[k]);
    }
    Ok(c)
}

/// Largest eigenvalue modulus of the companion matrix.
pub fn spectral_radius(m: &ARModel, cap: usize) -> Result<f64> {
    let c = companion(m, cap)?;
    Ok(c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Misspecification factors `(η, D')` with
/// `D' = ||(M_{A★} - M_{A★_{1:p'}}) L★||_op` and `η = max(1, 1 + D')`, or
/// `(1, 0)` when `p' = p`.
pub fn misspec_factors(
    m: &ARModel,
    p_prime: usize,
    horizon: usize,
    opts: &NormOptions,
) -> Result<(f64, f64)> {
    validate_model(m)?;
    if p_prime == 0 || p_prime > m.p {
        return Err(Error::invalid(format!("p' = {p_prime} outside [1, {}]", m.p)));
    }
    if p_prime == m.p {
        return Ok((1.0, 0.0));
    }
    let tail: Vec<DMatrix<f64>> = m
        .blocks
        .iter()
        .enumerate()
        .map(|(k, b)| if k < p_prime { DMatrix::zeros(m.d, m.d) } else { b.clone() })
        .collect();
    let tail_op = PredictionOp::new(&tail, horizon)?;
    let gen = GeneratorOp(PredictionOp::new(&m.blocks, horizon)?);
    let composite = Composed { outer: &tail_op, inner: &gen };
    let d_prime = opts.norm(&composite)?.value;
    Ok(((1.0 + d_prime).max(1.0), d_prime))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormConditionReport {
    pub budget: f64,
    /// `sum_k ||A_k||_op`.
    pub sum_block_norms: f64,
    /// `||[A_1 | ... | A_p]||_op`.
    pub concat_norm: f64,
    /// `sqrt(p) * concat_norm`.
    pub sqrt_p_concat_norm: f64,
    /// `||M_A||_op` over the given horizon.
    pub op_norm_m: f64,
    pub sum_condition_holds: bool,
    pub concat_condition_holds: bool,
    /// `||M_A|| <= min(sum, sqrt(p) ||A||)` up to the relative tolerance.
    pub upper_bounds_hold: bool,
    /// `||A|| <= ||M_A||`; only meaningful when `T > p`.
    pub lower_bound_holds: bool,
    pub lower_bound_applicable: bool,
}

pub fn check_norm_conditions(
    blocks: &[DMatrix<f64>],
    budget: f64,
    horizon: usize,
    opts: &NormOptions,
    rel_tol: f64,
) -> Result<NormConditionReport> {
    let op = PredictionOp::new(blocks, horizon)?;
    let p = blocks.len();
    let sum_block_norms: f64 = blocks.iter().map(linalg::spectral_norm).sum();
    let concat_norm = linalg::spectral_norm(&linalg::concat_blocks(blocks, op.d));
    let sqrt_p_concat_norm = (p as f64).sqrt() * concat_norm;
    let op_norm_m = opts.norm(&op)?.value;
    let slack = |v: f64| v * (1.0 + rel_tol) + rel_tol * f64::EPSILON.sqrt();
    let lower_bound_applicable = horizon > p;
    Ok(NormConditionReport {
        budget,
        sum_block_norms,
        concat_norm,
        sqrt_p_concat_norm,
        op_norm_m,
        sum_condition_holds: sum_block_norms <= budget,
        concat_condition_holds: sqrt_p_concat_norm <= budget,
        upper_bounds_hold: op_norm_m <= slack(sum_block_norms.min(sqrt_p_concat_norm)),
        lower_bound_holds: !lower_bound_applicable || concat_norm <= slack(op_norm_m),
        lower_bound_applicable,
    })
}

/// Summary diagnostics of a system over a horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "op_norm_M")]
    pub op_norm_m: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub spectral_radius: f64,
    pub stability: Stability,
    pub eta: Option<f64>,
    pub d_prime: Option<f64>,
}

/// All diagnostics of `m` at horizon `T`; `eta`/`d_prime` are filled only when
/// `p_student < p`. Stability is classified on `max(T, 8)` blocks.
pub fn diagnose(
    m: &ARModel,
    horizon: usize,
    p_student: Option<usize>,
    opts: &NormOptions,
) -> Result<Diagnostics> {
    validate_model(m)?;
    let op_norm_m = opts.norm(&PredictionOp::new(&m.blocks, horizon)?)?.value;
    let kappa = condition_number(m, horizon, opts)?.kappa;
    let zeta = zeta(m, horizon)?;
    let spectral_radius = spectral_radius(m, usize::MAX)?;
    let stability = classify_stability(m, horizon.max(8), DEFAULT_STABILITY_MARGIN)?.label;
    let (eta, d_prime) = match p_student {
        Some(pp) if pp < m.p => {
            let (eta, dp) = misspec_factors(m, pp, horizon, opts)?;
            (Some(eta), Some(dp))
        }
        _ => (None, None),
    };
    Ok(Diagnostics {
        op_norm_m,
        kappa,
        zeta,
        spectral_radius,
        stability,
        eta,
        d_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shift_operator() {
        let blocks = vec![DMatrix::identity(1, 1)];
        let out = apply_m(&blocks, 3, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_blocks_give_zero() {
        let blocks = vec![DMatrix::zeros(2, 2); 2];
        let out = apply_m(&blocks, 3, &[1.0; 6]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_m_length_mismatch() {
        let blocks = vec![DMatrix::identity(2, 2)];
        assert!(matches!(apply_m(&blocks, 3, &[1.0; 5]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn materialize_scalar() {
        let blocks = vec![DMatrix::from_element(1, 1, 0.7)];
        let m = materialize_m(&blocks, 2, 100).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.7, 0.0]));
        assert!(matches!(
            materialize_m(&blocks, 200, 100),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn nilpotent_power_is_zero() {
        let blocks = vec![
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.4, 1.1]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.5, -0.6]),
        ];
        let t = 5;
        let m = materialize_m(&blocks, t, 100).unwrap();
        let mut pow = DMatrix::identity(10, 10);
        for _ in 0..t {
            pow = &pow * &m;
        }
        assert!(pow.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_l_blocks_are_geometric() {
        let m = ARModel::scalar(&[0.5], 1.0);
        let l = build_l_blocks(&m, 6).unwrap();
        for (k, b) in l.blocks.iter().enumerate() {
            assert_relative_eq!(b[(0, 0)], 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn zero_model_l_is_identity() {
        let m = ARModel::zeros(2, 2, 1.0);
        let l = build_l_blocks(&m, 4).unwrap();
        assert_eq!(l.blocks[0], DMatrix::identity(2, 2));
        assert!(l.blocks[1..].iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(apply_l(&l, &v).unwrap(), v);
    }

    #[test]
    fn generator_matches_toeplitz() {
        let m = ARModel::new(
            vec![
                DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]),
                DMatrix::from_row_slice(2, 2, &[0.1, -0.3, 0.2, 0.05]),
            ],
            1.0,
        )
        .unwrap();
        let t = 7;
        let l = build_l_blocks(&m, t).unwrap();
        let gen = GeneratorOp(PredictionOp::new(&m.blocks, t).unwrap());
        let dense_l = l.to_dense();
        let dense_g = gen.to_dense();
        assert!((&dense_l - &dense_g).amax() < 1e-14);
        let x: Vec<f64> = (0..14).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (mut a, mut b) = (vec![0.0; 14], vec![0.0; 14]);
        l.apply_t(&x, &mut a);
        gen.apply_t(&x, &mut b);
        for (p, q) in a.iter().zip(&b) {
            assert_relative_eq!(p, q, epsilon = 1e-13);
        }
    }

    #[test]
    fn adjoints_are_consistent() {
        let blocks = vec![
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]),
            DMatrix::from_row_slice(2, 2, &[0.1, -0.3, 0.2, 0.05]),
        ];
        let op = PredictionOp::new(&blocks, 5).unwrap();
        let dense = op.to_dense();
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; 10];
        op.apply_t(&x, &mut y);
        let expect = dense.transpose() * nalgebra::DVector::from_column_slice(&x);
        for (a, b) in y.iter().zip(expect.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn op_norm_identity_and_diagonal() {
        let id = DMatrix::<f64>::identity(5, 5);
        assert_relative_eq!(op_norm(&id, 1e-12, 100).unwrap().value, 1.0, epsilon = 1e-12);
        let diag = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(op_norm(&diag, 1e-12, 1000).unwrap().value, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn op_norm_reports_non_convergence() {
        // Nearly tied top singular values converge slowly.
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.999999]);
        let est = op_norm(&diag, 1e-16, 3).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iters, 3);
        assert!(op_norm(&diag, 0.0, 3).is_err());
    }

    #[test]
    fn kappa_of_zero_model_is_one() {
        let m = ARModel::zeros(2, 3, 1.0);
        let c = condition_number(&m, 6, &NormOptions::default()).unwrap();
        assert_relative_eq!(c.kappa, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kappa_two_by_two() {
        // L = [[1, 0], [0.5, 1]]: singular values solve s^4 - 2.25 s^2 + 1 = 0.
        let m = ARModel::scalar(&[0.5], 1.0);
        let c = condition_number(&m, 2, &NormOptions::default()).unwrap();
        let s2_max = (2.25 + (2.25f64 * 2.25 - 4.0).sqrt()) / 2.0;
        let s2_min = (2.25 - (2.25f64 * 2.25 - 4.0).sqrt()) / 2.0;
        assert_relative_eq!(c.kappa, (s2_max / s2_min).sqrt(), epsilon = 1e-12);
        let mf = condition_number(&m, 2, &NormOptions::matrix_free(1e-14, 10_000)).unwrap();
        assert_relative_eq!(mf.kappa, c.kappa, epsilon = 1e-9);
    }

    #[test]
    fn zeta_scalar_cases() {
        assert_relative_eq!(zeta(&ARModel::scalar(&[1.0], 1.0), 10).unwrap(), 1.0);
        assert_relative_eq!(zeta(&ARModel::zeros(1, 2, 1.0), 10).unwrap(), 1.0);
        assert_relative_eq!(zeta(&ARModel::scalar(&[2.0], 1.0), 4).unwrap(), 8.0);
    }

    #[test]
    fn stability_classes() {
        let cls = |a: f64| classify_stability(&ARModel::scalar(&[a], 1.0), 40, 0.05).unwrap().label;
        assert_eq!(cls(0.5), Stability::StrictlyStable);
        assert_eq!(cls(1.0), Stability::MarginallyStable);
        assert_eq!(cls(1.5), Stability::Explosive);
        let zero = classify_stability(&ARModel::zeros(2, 2, 1.0), 10, 0.05).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.label, Stability::StrictlyStable);
        assert!(classify_stability(&ARModel::scalar(&[0.5], 1.0), 7, 0.05).is_err());
    }

    #[test]
    fn jordan_block_is_marginal_with_linear_growth() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let r = classify_stability(&ARModel::new(vec![a], 1.0).unwrap(), 200, 0.05).unwrap();
        assert_eq!(r.label, Stability::MarginallyStable);
        let deg = r.polynomial_fit.unwrap().slope;
        assert!((deg - 1.0).abs() < 0.05, "degree {deg}");
    }

    #[test]
    fn companion_examples() {
        let m = ARModel::scalar(&[0.0, 0.0], 1.0);
        let c = companion(&m, 100).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert!(spectral_radius(&m, 100).unwrap() < 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let m1 = ARModel::new(vec![a.clone()], 1.0).unwrap();
        assert_eq!(companion(&m1, 100).unwrap(), a);

        let m2 = ARModel::scalar(&[0.5, 0.5], 1.0);
        assert_relative_eq!(spectral_radius(&m2, 100).unwrap(), 1.0, epsilon = 1e-12);
        assert!(companion(&m2, 1).is_err());
    }

    #[test]
    fn misspec_trivial_cases() {
        let m = ARModel::scalar(&[0.3, 0.2], 1.0);
        assert_eq!(misspec_factors(&m, 2, 10, &NormOptions::default()).unwrap(), (1.0, 0.0));
        let zero_tail = ARModel::scalar(&[0.3, 0.0], 1.0);
        let (eta, dp) = misspec_factors(&zero_tail, 1, 10, &NormOptions::default()).unwrap();
        assert_eq!(dp, 0.0);
        assert_eq!(eta, 1.0);
        assert!(misspec_factors(&m, 3, 10, &NormOptions::default()).is_err());
    }

    #[test]
    fn norm_conditions_coincide_for_single_block() {
        let a = DMatrix::from_row_slice(2, 2, &[0.4, -0.3, 0.2, 0.1]);
        let r = check_norm_conditions(&[a.clone()], 1.0, 6, &NormOptions::default(), 1e-9).unwrap();
        let expect = linalg::spectral_norm(&a);
        assert_relative_eq!(r.sum_block_norms, expect, epsilon = 1e-12);
        assert_relative_eq!(r.sqrt_p_concat_norm, expect, epsilon = 1e-12);
        assert_relative_eq!(r.op_norm_m, expect, epsilon = 1e-10);
        assert!(r.upper_bounds_hold && r.lower_bound_holds);
    }

    #[test]
    fn diagnostics_of_zero_model() {
        let d = diagnose(&ARModel::zeros(2, 2, 1.0), 10, None, &NormOptions::default()).unwrap();
        assert_relative_eq!(d.kappa, 1.0, epsilon = 1e-12);
        assert_eq!(d.stability, Stability::StrictlyStable);
        assert_eq!(d.eta, None);
        let v = serde_json::to_value(&d).unwrap();
        for key in ["op_norm_M", "kappa", "zeta", "spectral_radius", "stability", "eta", "d_prime"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["stability"], "strictly_stable");
    }
}
