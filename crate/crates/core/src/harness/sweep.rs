//! Sweep specification, per-cell execution and result tables.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::truth::{generate_ground_truth, GroundTruthSpec, DEFAULT_ALPHA, DEFAULT_ALPHA_INIT};
use crate::error::{Error, Result};
use crate::estimators::fit;
use crate::linalg::blocks_frob_dist_sq;
use crate::model::{
    ARModel, EstimatorConfig, EstimatorKind, InitStrategy, NoiseFamily, NoiseSpec, RangeMode,
};
use crate::operators::{condition_number, misspec_factors, NormOptions};
use crate::simulator::simulate;

/// Which context length enters `T = ceil(mult · p·d·r / N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TBasis {
    /// The ground truth's `p`.
    #[default]
    Teacher,
    /// The fitted `p'`.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Zeros,
    /// Student recipe with `alpha_init`, seeded by the cell seed.
    ScaledOrthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub d: Vec<usize>,
    pub p: Vec<usize>,
    /// Empty means `p' = p`.
    pub p_student: Vec<usize>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    #[serde(rename = "T_multipliers")]
    pub t_multipliers: Vec<f64>,
    /// Ranks of the ground truth; empty or `r >= d` means full rank.
    pub r: Vec<usize>,
    pub estimators: Vec<EstimatorKind>,
    /// Used by the group-nuclear fit only.
    pub lambda: Vec<f64>,
    /// Used by the iterative fits; empty means the automatic step.
    pub step_size: Vec<f64>,
    pub seeds: Vec<u64>,
    pub range_mode: RangeMode,
    pub t_basis: TBasis,
    pub alpha: f64,
    pub alpha_init: f64,
    pub init: InitKind,
    pub sigma: f64,
    pub noise: NoiseFamily,
    #[serde(rename = "D")]
    pub d_budget: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Horizon cap for κ and η; `0` uses each cell's `T`.
    pub diag_horizon: usize,
    /// Record wall-clock time in `runtime_ms` (otherwise 0, keeping output reproducible).
    pub timing: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            d: vec![5],
            p: vec![5],
            p_student: Vec::new(),
            n: vec![5],
            t_multipliers: vec![5.0, 25.0, 50.0],
            r: Vec::new(),
            estimators: vec![EstimatorKind::Ols],
            lambda: Vec::new(),
            step_size: Vec::new(),
            seeds: vec![0, 1, 2],
            range_mode: RangeMode::Full,
            t_basis: TBasis::Teacher,
            alpha: DEFAULT_ALPHA,
            alpha_init: DEFAULT_ALPHA_INIT,
            init: InitKind::Zeros,
            sigma: 1.0,
            noise: NoiseFamily::Gaussian,
            d_budget: 2.0,
            max_iters: 5000,
            tol: 1e-10,
            diag_horizon: 50,
            timing: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[usize], allow_empty: bool| -> Result<()> {
            if (!allow_empty && v.is_empty()) || v.contains(&0) {
                return Err(Error::invalid(format!("grid `{name}` must be non-empty with positive entries")));
            }
            Ok(())
        };
        positive("d", &self.d, false)?;
        positive("p", &self.p, false)?;
        positive("p_student", &self.p_student, true)?;
        positive("N", &self.n, false)?;
        positive("r", &self.r, true)?;
        if self.t_multipliers.is_empty() || self.t_multipliers.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid("T_multipliers must be non-empty and positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds must be non-empty"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("estimators must be non-empty"));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda entries must be positive"));
        }
        if self.estimators.contains(&EstimatorKind::GroupNuclearProx) && self.lambda.is_empty() {
            return Err(Error::invalid("group_nuclear_prox needs a lambda grid"));
        }
        if self.step_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("step_size entries must be positive"));
        }
        if !(self.alpha > 0.0) || !(self.alpha_init > 0.0) {
            return Err(Error::invalid("alpha and alpha_init must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::NegativeSigma(self.sigma));
        }
        Ok(())
    }

    /// Every (cell, hyperparameter) combination, in sorted order.
    pub fn cells(&self) -> Vec<CellConfig> {
        let mut out = Vec::new();
        for &d in &self.d {
            for &p in &self.p {
                let students: Vec<usize> = if self.p_student.is_empty() { vec![p] } else { self.p_student.clone() };
                let ranks: Vec<usize> = if self.r.is_empty() {
                    vec![d]
                } else {
                    self.r.iter().map(|&r| r.min(d)).collect()
                };
                for &ps in &students {
                    for &r in &ranks {
                        for &n in &self.n {
                            for &mult in &self.t_multipliers {
                                let basis = match self.t_basis {
                                    TBasis::Teacher => p,
                                    TBasis::Student => ps,
                                };
                                let t = horizon_for(mult, basis, d, r, n, ps);
                                for &kind in &self.estimators {
                                    for (lambda, step_size) in self.hyperparameters(kind) {
                                        out.push(CellConfig {
                                            d,
                                            p,
                                            p_student: ps,
                                            r,
                                            n,
                                            t,
                                            estimator: kind,
                                            lambda,
                                            step_size,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(CellConfig::cmp_key);
        out.dedup();
        out
    }

    fn hyperparameters(&self, kind: EstimatorKind) -> Vec<(f64, Option<f64>)> {
        let steps: Vec<Option<f64>> = if self.step_size.is_empty() {
            vec![None]
        } else {
            self.step_size.iter().copied().map(Some).collect()
        };
        match kind {
            EstimatorKind::Ols => vec![(0.0, None)],
            EstimatorKind::ConstrainedPgd | EstimatorKind::IhtLowRank => {
                steps.into_iter().map(|s| (0.0, s)).collect()
            }
            EstimatorKind::GroupNuclearProx => self
                .lambda
                .iter()
                .flat_map(|&l| steps.iter().map(move |&s| (l, s)))
                .collect(),
        }
    }

    pub fn cell_options(&self) -> CellOptions {
        CellOptions {
            alpha: self.alpha,
            alpha_init: self.alpha_init,
            init: self.init,
            noise: self.noise,
            sigma: self.sigma,
            d_budget: self.d_budget,
            max_iters: self.max_iters,
            tol: self.tol,
            range_mode: self.range_mode,
            diag_horizon: self.diag_horizon,
            timing: self.timing,
        }
    }
}

/// `ceil(mult · basis·d·r / N)`, at least `p' + 1`.
pub fn horizon_for(mult: f64, basis: usize, d: usize, r: usize, n: usize, p_student: usize) -> usize {
    let raw = (mult * (basis * d * r) as f64 / n as f64).ceil();
    (raw as usize).max(p_student + 1)
}

/// One point of the sweep grid, without the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    pub d: usize,
    pub p: usize,
    pub p_student: usize,
    pub r: usize,
    pub n: usize,
    pub t: usize,
    pub estimator: EstimatorKind,
    pub lambda: f64,
    pub step_size: Option<f64>,
}

impl CellConfig {
    fn cmp_key(a: &Self, b: &Self) -> Ordering {
        (a.d, a.p, a.p_student, a.r, a.n, a.t, a.estimator)
            .cmp(&(b.d, b.p, b.p_student, b.r, b.n, b.t, b.estimator))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(cmp_opt(a.step_size, b.step_size))
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub alpha: f64,
    pub alpha_init: f64,
    pub init: InitKind,
    pub noise: NoiseFamily,
    pub sigma: f64,
    pub d_budget: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub range_mode: RangeMode,
    pub diag_horizon: usize,
    pub timing: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        SweepSpec::default().cell_options()
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub d: usize,
    pub p: usize,
    pub p_student: usize,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Empty for seed-averaged rows.
    pub seed: Option<u64>,
    pub estimator: EstimatorKind,
    pub lambda: f64,
    pub step_size: Option<f64>,
    pub error_frob_sq: f64,
    pub train_loss: f64,
    pub beta: f64,
    pub gamma: f64,
    pub beta_tilde: f64,
    pub kappa: f64,
    pub eta: f64,
    pub runtime_ms: f64,
    pub status: String,
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_NOT_CONVERGED: &str = "not_converged";
pub const STATUS_MEAN: &str = "mean";
pub const STATUS_MEAN_PARTIAL: &str = "mean_partial";

impl ResultRecord {
    pub fn cell(&self) -> CellConfig {
        CellConfig {
            d: self.d,
            p: self.p,
            p_student: self.p_student,
            r: self.r,
            n: self.n,
            t: self.t,
            estimator: self.estimator,
            lambda: self.lambda,
            step_size: self.step_size,
        }
    }

    pub fn is_mean(&self) -> bool {
        self.seed.is_none()
    }

    fn blank(cell: &CellConfig, seed: Option<u64>) -> Self {
        let beta = (cell.n * cell.t) as f64;
        ResultRecord {
            d: cell.d,
            p: cell.p,
            p_student: cell.p_student,
            r: cell.r,
            n: cell.n,
            t: cell.t,
            seed,
            estimator: cell.estimator,
            lambda: cell.lambda,
            step_size: cell.step_size,
            error_frob_sq: f64::NAN,
            train_loss: f64::NAN,
            beta,
            gamma: (cell.p_student * cell.d * cell.r) as f64,
            beta_tilde: beta / (1.0 + (cell.n as f64).sqrt()).ln(),
            kappa: f64::NAN,
            eta: f64::NAN,
            runtime_ms: 0.0,
            status: String::new(),
        }
    }

    fn cmp_key(a: &Self, b: &Self) -> Ordering {
        CellConfig::cmp_key(&a.cell(), &b.cell()).then(match (a.seed, b.seed) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub records: Vec<ResultRecord>,
}

impl ResultTable {
    pub fn raw(&self) -> impl Iterator<Item = &ResultRecord> {
        self.records.iter().filter(|r| !r.is_mean())
    }

    pub fn averaged(&self) -> impl Iterator<Item = &ResultRecord> {
        self.records.iter().filter(|r| r.is_mean())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `(κ, η)` of the truth over `min(T, diag_horizon)`.
pub fn truth_diagnostics(truth: &ARModel, p_student: usize, horizon: usize, diag_horizon: usize) -> Result<(f64, f64)> {
    let h = if diag_horizon == 0 { horizon } else { horizon.min(diag_horizon) };
    let opts = NormOptions::default();
    let kappa = condition_number(truth, h, &opts)?.kappa;
    let eta = if p_student < truth.p { misspec_factors(truth, p_student, h, &opts)?.0 } else { 1.0 };
    Ok((kappa, eta))
}

/// Simulates with `seed`, fits, and scores against the first `p'` truth
/// blocks (zero-padded when `p' > p`). Failures land in `status`.
pub fn run_cell(truth: &ARModel, cell: &CellConfig, opts: &CellOptions, seed: u64) -> ResultRecord {
    let diag = truth_diagnostics(truth, cell.p_student, cell.t, opts.diag_horizon);
    run_cell_with(truth, cell, opts, seed, diag)
}

fn run_cell_with(
    truth: &ARModel,
    cell: &CellConfig,
    opts: &CellOptions,
    seed: u64,
    diag: Result<(f64, f64)>,
) -> ResultRecord {
    let start = Instant::now();
    let mut rec = ResultRecord::blank(cell, Some(seed));
    match diag {
        Ok((k, e)) => {
            rec.kappa = k;
            rec.eta = e;
        }
        Err(e) => log::warn!("diagnostics failed for {cell:?}: {e}"),
    }
    match fit_cell(truth, cell, opts, seed) {
        Ok((err, loss, converged)) => {
            rec.error_frob_sq = err;
            rec.train_loss = loss;
            rec.status = if !err.is_finite() {
                "diverged".into()
            } else if converged {
                STATUS_OK.into()
            } else {
                STATUS_NOT_CONVERGED.into()
            };
        }
        Err(e) => rec.status = format!("error: {e}"),
    }
    if opts.timing {
        rec.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    rec
}

fn fit_cell(truth: &ARModel, cell: &CellConfig, opts: &CellOptions, seed: u64) -> Result<(f64, f64, bool)> {
    if truth.p != cell.p || truth.d != cell.d {
        return Err(Error::dims(format!(
            "truth has p = {}, d = {}; cell expects p = {}, d = {}",
            truth.p, truth.d, cell.p, cell.d
        )));
    }
    if cell.t < cell.p_student {
        return Err(Error::invalid(format!("T = {} < p' = {}", cell.t, cell.p_student)));
    }
    let noise = NoiseSpec::new(opts.noise, truth.sigma)?;
    let (ds, _) = simulate(truth, &noise, cell.n, cell.t, seed)?;
    let cfg = EstimatorConfig {
        kind: cell.estimator,
        p_student: cell.p_student,
        d_budget: opts.d_budget,
        r: (cell.estimator == EstimatorKind::IhtLowRank).then_some(cell.r),
        lambda: cell.lambda,
        step_size: cell.step_size,
        max_iters: opts.max_iters,
        tol: opts.tol,
        loss_range: opts.range_mode,
        project: false,
        init: match opts.init {
            InitKind::Zeros => InitStrategy::Zeros,
            InitKind::ScaledOrthogonal => InitStrategy::ScaledOrthogonal { alpha: opts.alpha_init, seed },
        },
    };
    let report = fit(&ds, &cfg)?;
    let target = truth.blocks_padded(cell.p_student);
    let err = blocks_frob_dist_sq(&report.blocks, &target);
    Ok((err, report.final_loss, report.converged))
}

/// Truth used for `(p, d, r, seed)`: rank `r < d` gives a low-rank truth.
pub fn truth_for(p: usize, d: usize, r: usize, seed: u64, opts: &CellOptions) -> Result<ARModel> {
    generate_ground_truth(&GroundTruthSpec {
        p,
        d,
        alpha: opts.alpha,
        rank: (r < d).then_some(r),
        seed,
        sigma: opts.sigma,
    })
}

/// Runs every cell for every seed on the current rayon pool and appends one
/// seed-averaged record per cell. Output order is independent of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<ResultTable> {
    spec.validate()?;
    let opts = spec.cell_options();
    let cells = spec.cells();

    let mut truth_keys: Vec<(usize, usize, usize, u64)> = cells
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c.p, c.d, c.r, s)))
        .collect();
    truth_keys.sort_unstable();
    truth_keys.dedup();
    let truths: HashMap<_, _> = truth_keys
        .par_iter()
        .map(|&(p, d, r, s)| ((p, d, r, s), truth_for(p, d, r, s, &opts)))
        .collect();

    let diag_h = |t: usize| if opts.diag_horizon == 0 { t } else { t.min(opts.diag_horizon) };
    let mut diag_keys: Vec<(usize, usize, usize, u64, usize, usize)> = cells
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c.p, c.d, c.r, s, c.p_student, diag_h(c.t))))
        .collect();
    diag_keys.sort_unstable();
    diag_keys.dedup();
    let diags: HashMap<_, (f64, f64)> = diag_keys
        .par_iter()
        .filter_map(|&(p, d, r, s, ps, h)| {
            let truth = truths[&(p, d, r, s)].as_ref().ok()?;
            truth_diagnostics(truth, ps, h, 0).ok().map(|v| ((p, d, r, s, ps, h), v))
        })
        .collect();

    let jobs: Vec<(CellConfig, u64)> = cells
        .iter()
        .flat_map(|c| spec.seeds.iter().map(move |&s| (*c, s)))
        .collect();
    let mut raw: Vec<ResultRecord> = jobs
        .par_iter()
        .map(|(cell, seed)| {
            let key = (cell.p, cell.d, cell.r, *seed);
            match &truths[&key] {
                Ok(truth) => {
                    let dk = (cell.p, cell.d, cell.r, *seed, cell.p_student, diag_h(cell.t));
                    let diag = diags
                        .get(&dk)
                        .copied()
                        .ok_or_else(|| Error::invalid("diagnostics unavailable"));
                    run_cell_with(truth, cell, &opts, *seed, diag)
                }
                Err(e) => {
                    let mut rec = ResultRecord::blank(cell, Some(*seed));
                    rec.status = format!("error: {e}");
                    rec
                }
            }
        })
        .collect();
    raw.sort_by(ResultRecord::cmp_key);
    Ok(ResultTable { records: with_averages(raw) })
}

/// [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &SweepSpec, workers: usize) -> Result<ResultTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Inserts a mean record after each run of raw records sharing a cell.
fn with_averages(raw: Vec<ResultRecord>) -> Vec<ResultRecord> {
    let mut out = Vec::with_capacity(raw.len() + raw.len() / 2);
    let mut i = 0;
    while i < raw.len() {
        let cell = raw[i].cell();
        let mut j = i;
        while j < raw.len() && raw[j].cell() == cell {
            j += 1;
        }
        let group = &raw[i..j];
        let mut mean = ResultRecord::blank(&cell, None);
        mean.error_frob_sq = mean_of(group.iter().map(|r| r.error_frob_sq));
        mean.train_loss = mean_of(group.iter().map(|r| r.train_loss));
        mean.kappa = mean_of(group.iter().map(|r| r.kappa));
        mean.eta = mean_of(group.iter().map(|r| r.eta));
        mean.runtime_ms = mean_of(group.iter().map(|r| r.runtime_ms));
        let complete = group.iter().all(|r| r.error_frob_sq.is_finite());
        mean.status = if complete { STATUS_MEAN } else { STATUS_MEAN_PARTIAL }.into();
        out.extend_from_slice(group);
        out.push(mean);
        i = j;
    }
    out
}
