//! Domain types shared by every other module: systems, noise laws, datasets
//! and estimator configurations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// An order-`p` linear autoregressive system in dimension `d`:
/// `x_t = sum_k A_k x_{t-k} + xi_t`, with `x_s = 0` for `s <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ARModel {
    pub p: usize,
    pub d: usize,
    pub blocks: Vec<DMatrix<f64>>,
    pub sigma: f64,
}

impl ARModel {
    /// Builds a model and checks every invariant.
    pub fn new(blocks: Vec<DMatrix<f64>>, sigma: f64) -> Result<Self> {
        let p = blocks.len();
        let d = blocks.first().map(|b| b.nrows()).unwrap_or(0);
        let m = ARModel { p, d, blocks, sigma };
        validate_model(&m)?;
        Ok(m)
    }

    pub fn zeros(p: usize, d: usize, sigma: f64) -> Self {
        ARModel {
            p,
            d,
            blocks: vec![DMatrix::zeros(d, d); p],
            sigma,
        }
    }

    /// Scalar AR(p) model (`d = 1`) from its coefficients.
    pub fn scalar(coeffs: &[f64], sigma: f64) -> Self {
        ARModel {
            p: coeffs.len(),
            d: 1,
            blocks: coeffs.iter().map(|&a| DMatrix::from_element(1, 1, a)).collect(),
            sigma,
        }
    }

    /// The `d × p·d` concatenation `[A_1 | A_2 | ... | A_p]`.
    pub fn concat(&self) -> DMatrix<f64> {
        linalg::concat_blocks(&self.blocks, self.d)
    }

    /// Blocks extended with zeros (or cut) to exactly `len` entries.
    pub fn blocks_padded(&self, len: usize) -> Vec<DMatrix<f64>> {
        (0..len)
            .map(|k| {
                self.blocks
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(self.d, self.d))
            })
            .collect()
    }
}

/// Checks that `m` has `p` finite `d × d` blocks and `sigma >= 0`.
pub fn validate_model(m: &ARModel) -> Result<()> {
    if m.p == 0 || m.d == 0 {
        return Err(Error::dims(format!("p = {}, d = {} must be positive", m.p, m.d)));
    }
    if m.blocks.len() != m.p {
        return Err(Error::dims(format!(
            "expected {} blocks, found {}",
            m.p,
            m.blocks.len()
        )));
    }
    for (k, b) in m.blocks.iter().enumerate() {
        if b.shape() != (m.d, m.d) {
            return Err(Error::dims(format!(
                "block A_{} is {}x{}, expected {}x{}",
                k + 1,
                b.nrows(),
                b.ncols(),
                m.d,
                m.d
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("block A_{}", k + 1)));
        }
    }
    if m.sigma.is_nan() || m.sigma.is_infinite() {
        return Err(Error::NonFinite("sigma".into()));
    }
    if m.sigma < 0.0 {
        return Err(Error::NegativeSigma(m.sigma));
    }
    Ok(())
}

/// Keeps `A_1..A_{p'}` and zeroes the remaining `p - p'` blocks.
pub fn truncate_truth(m: &ARModel, p_prime: usize) -> Result<ARModel> {
    if p_prime == 0 || p_prime > m.p {
        return Err(Error::invalid(format!(
            "p' = {p_prime} outside [1, {}]",
            m.p
        )));
    }
    let mut out = m.clone();
    for b in out.blocks.iter_mut().skip(p_prime) {
        b.fill(0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

impl NoiseFamily {
    /// Sub-Gaussian constant `c` reported alongside the law. All three laws
    /// are standardized to unit variance, so `c = 1` for each.
    pub fn subgauss_c(self) -> f64 {
        1.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Rademacher => "rademacher",
            NoiseFamily::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "rademacher" => Ok(NoiseFamily::Rademacher),
            "uniform" => Ok(NoiseFamily::Uniform),
            other => Err(Error::Parse(format!("unknown noise family `{other}`"))),
        }
    }
}

/// Centered, coordinate-independent noise with per-coordinate variance `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub sigma: f64,
    pub subgauss_c: f64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::NonFinite("sigma".into()));
        }
        if sigma < 0.0 {
            return Err(Error::NegativeSigma(sigma));
        }
        Ok(NoiseSpec {
            family,
            sigma,
            subgauss_c: family.subgauss_c(),
        })
    }

    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Gaussian,
            sigma,
            subgauss_c: 1.0,
        }
    }
}

/// The `T·d × N` matrix whose column `n` stacks `xi_1^{(n)}, ..., xi_T^{(n)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTensor {
    pub num_seqs: usize,
    pub horizon: usize,
    pub dim: usize,
    pub values: DMatrix<f64>,
}

impl NoiseTensor {
    pub fn new(horizon: usize, dim: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != horizon * dim {
            return Err(Error::dims(format!(
                "noise has {} rows, expected T*d = {}",
                values.nrows(),
                horizon * dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise tensor".into()));
        }
        Ok(NoiseTensor {
            num_seqs: values.ncols(),
            horizon,
            dim,
            values,
        })
    }

    /// Stacked noise of trajectory `n` (length `T·d`).
    pub fn column(&self, n: usize) -> &[f64] {
        let len = self.horizon * self.dim;
        &self.values.as_slice()[n * len..(n + 1) * len]
    }
}

/// `N` trajectories of length `T` in dimension `d`, stored trajectory-major:
/// entry `(n, t, i)` (all zero-based) lives at `(n·T + t)·d + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_seqs: usize,
    pub horizon: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseSpec>,
}

impl Dataset {
    pub fn new(num_seqs: usize, horizon: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if num_seqs == 0 || horizon == 0 || dim == 0 {
            return Err(Error::dims("N, T and d must be positive"));
        }
        if data.len() != num_seqs * horizon * dim {
            return Err(Error::dims(format!(
                "data has {} entries, expected N*T*d = {}",
                data.len(),
                num_seqs * horizon * dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Dataset {
            num_seqs,
            horizon,
            dim,
            data,
            seed: None,
            noise: None,
        })
    }

    /// Stacked states `x_1, ..., x_T` of trajectory `n` (zero-based).
    pub fn trajectory(&self, n: usize) -> &[f64] {
        let len = self.horizon * self.dim;
        &self.data[n * len..(n + 1) * len]
    }

    /// State `x_t` of trajectory `n`, with `t` one-based as in the recursion.
    pub fn state(&self, n: usize, t: usize) -> &[f64] {
        let base = (n * self.horizon + (t - 1)) * self.dim;
        &self.data[base..base + self.dim]
    }

    /// Total token count `N·T`.
    pub fn tokens(&self) -> usize {
        self.num_seqs * self.horizon
    }

    /// Data as the `T·d × N` matrix of stacked trajectories.
    pub fn stacked(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.horizon * self.dim, self.num_seqs, &self.data)
    }
}

/// Which time steps enter the square loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// `t = 1..T` with zero-padded lags.
    #[default]
    Full,
    /// `t = p'..T`.
    FromP,
}

impl RangeMode {
    /// First one-based time index included in the loss.
    pub fn first_step(self, p_student: usize) -> usize {
        match self {
            RangeMode::Full => 1,
            RangeMode::FromP => p_student.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    ConstrainedPgd,
    IhtLowRank,
    GroupNuclearProx,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::ConstrainedPgd => "constrained_pgd",
            EstimatorKind::IhtLowRank => "iht_low_rank",
            EstimatorKind::GroupNuclearProx => "group_nuclear_prox",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(EstimatorKind::Ols),
            "constrained_pgd" => Ok(EstimatorKind::ConstrainedPgd),
            "iht_low_rank" => Ok(EstimatorKind::IhtLowRank),
            "group_nuclear_prox" => Ok(EstimatorKind::GroupNuclearProx),
            other => Err(Error::Parse(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Starting point for the iterative estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitStrategy {
    #[default]
    Zeros,
    /// `p'` Haar-orthogonal blocks scaled by `alpha / p'`.
    ScaledOrthogonal { alpha: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub p_student: usize,
    /// Budget on `||M_A||_op`; enforced through `||A||_op <= D / sqrt(p')`.
    #[serde(rename = "D")]
    pub d_budget: f64,
    pub r: Option<usize>,
    pub lambda: f64,
    /// `None` selects `0.9 / L` with `L = 2 λ_max(Gram) / NT`.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub loss_range: RangeMode,
    /// Also project onto the operator-norm ball in the group-nuclear fit.
    pub project: bool,
    pub init: InitStrategy,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Ols,
            p_student: 1,
            d_budget: 2.0,
            r: None,
            lambda: 0.0,
            step_size: None,
            max_iters: 5000,
            tol: 1e-10,
            loss_range: RangeMode::Full,
            project: false,
            init: InitStrategy::Zeros,
        }
    }
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, p_student: usize) -> Self {
        EstimatorConfig {
            kind,
            p_student,
            ..Default::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.p_student == 0 {
            return Err(Error::invalid("p_student must be >= 1"));
        }
        let uses_budget = matches!(
            self.kind,
            EstimatorKind::ConstrainedPgd | EstimatorKind::IhtLowRank
        ) || (self.kind == EstimatorKind::GroupNuclearProx && self.project);
        if uses_budget && !(self.d_budget >= 1.0) {
            return Err(Error::invalid(format!("D = {} must be >= 1", self.d_budget)));
        }
        if self.kind == EstimatorKind::IhtLowRank {
            match self.r {
                Some(r) if (1..=dim).contains(&r) => {}
                Some(r) => return Err(Error::invalid(format!("rank r = {r} outside [1, {dim}]"))),
                None => return Err(Error::invalid("iht_low_rank requires a target rank r")),
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if let Some(step) = self.step_size {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::invalid(format!("step_size = {step} must be > 0")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_model_is_valid() {
        let m = ARModel::new(vec![DMatrix::identity(2, 2)], 1.0).unwrap();
        assert_eq!((m.p, m.d), (1, 2));
    }

    #[test]
    fn wrong_block_shape_is_rejected() {
        let m = ARModel {
            p: 2,
            d: 2,
            blocks: vec![DMatrix::identity(2, 2), DMatrix::zeros(3, 2)],
            sigma: 1.0,
        };
        assert!(matches!(validate_model(&m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn block_count_must_match_p() {
        let m = ARModel {
            p: 3,
            d: 1,
            blocks: vec![DMatrix::identity(1, 1)],
            sigma: 1.0,
        };
        assert!(matches!(validate_model(&m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let mut m = ARModel::scalar(&[0.5], 1.0);
        m.sigma = -1.0;
        assert!(matches!(validate_model(&m), Err(Error::NegativeSigma(_))));
    }

    #[test]
    fn non_finite_entry_is_rejected() {
        let m = ARModel::scalar(&[f64::NAN], 1.0);
        assert!(matches!(validate_model(&m), Err(Error::NonFinite(_))));
        let m = ARModel::scalar(&[f64::INFINITY], 1.0);
        assert!(matches!(validate_model(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn validate_small_exhaustive() {
        // Every combination of (block count ok, shape ok, finite, sigma sign).
        for count_ok in [true, false] {
            for shape_ok in [true, false] {
                for finite in [true, false] {
                    for sigma in [0.0, 1.0, -0.5] {
                        let good = DMatrix::from_element(2, 2, if finite { 0.1 } else { f64::NAN });
                        let bad = DMatrix::zeros(2, 3);
                        let mut blocks = vec![good.clone(), if shape_ok { good.clone() } else { bad }];
                        if !count_ok {
                            blocks.pop();
                        }
                        let m = ARModel { p: 2, d: 2, blocks, sigma };
                        let expect_ok = count_ok && shape_ok && finite && sigma >= 0.0;
                        assert_eq!(validate_model(&m).is_ok(), expect_ok, "{count_ok} {shape_ok} {finite} {sigma}");
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_zeroes_tail() {
        let m = ARModel::scalar(&[0.3, 0.2], 1.0);
        let t = truncate_truth(&m, 1).unwrap();
        assert_eq!(t.blocks[0][(0, 0)], 0.3);
        assert_eq!(t.blocks[1][(0, 0)], 0.0);
        assert_eq!(truncate_truth(&m, 2).unwrap(), m);
        assert!(truncate_truth(&m, 0).is_err());
        assert!(truncate_truth(&m, 3).is_err());
    }

    #[test]
    fn estimator_config_json_uses_public_field_names() {
        let cfg = EstimatorConfig::new(EstimatorKind::IhtLowRank, 2);
        let v = serde_json::to_value(&cfg).unwrap();
        for key in ["kind", "p_student", "D", "r", "lambda", "step_size", "max_iters", "tol", "loss_range"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let parsed: EstimatorConfig =
            serde_json::from_str(r#"{"kind":"group_nuclear_prox","p_student":3,"lambda":0.01}"#).unwrap();
        assert_eq!(parsed.p_student, 3);
        assert_eq!(parsed.max_iters, 5000);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EstimatorConfig::new(EstimatorKind::IhtLowRank, 1);
        assert!(cfg.validate(3).is_err());
        cfg.r = Some(2);
        assert!(cfg.validate(3).is_ok());
        cfg.r = Some(4);
        assert!(cfg.validate(3).is_err());
        let mut cfg = EstimatorConfig::new(EstimatorKind::ConstrainedPgd, 1);
        cfg.d_budget = 0.5;
        assert!(cfg.validate(3).is_err());
        cfg.d_budget = 1.0;
        cfg.step_size = Some(0.0);
        assert!(cfg.validate(3).is_err());
    }
}
