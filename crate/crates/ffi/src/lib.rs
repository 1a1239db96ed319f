//! C ABI over `arsysid`.
//!
//! Objects are opaque handles created by `ars_*_new`-style functions and
//! released with the matching `ars_*_free`. Every function returns an
//! [`ArsStatus`]; on failure a message is available from
//! [`ars_last_error_message`] on the same thread. Matrices cross the boundary
//! as row-major `double` arrays, coefficient blocks concatenated `A_1, ..., A_p`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use arsysid::estimators::{self, EstimateReport};
use arsysid::harness::{generate_ground_truth, GroundTruthSpec};
use arsysid::operators::{diagnose, NormOptions, Stability};
use arsysid::{
    io, simulator, ARModel, Dataset, EstimatorConfig, EstimatorKind, InitStrategy, NoiseFamily, NoiseSpec,
    RangeMode,
};
use nalgebra::DMatrix;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArsNoise {
    Gaussian = 0,
    Rademacher = 1,
    Uniform = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArsRange {
    /// `t = 1..T` with zero-padded lags.
    Full = 0,
    /// `t = p'..T`.
    FromP = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArsEstimator {
    Ols = 0,
    ConstrainedPgd = 1,
    IhtLowRank = 2,
    GroupNuclearProx = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArsStability {
    StrictlyStable = 0,
    MarginallyStable = 1,
    Explosive = 2,
}

/// Fit settings. Start from [`ars_fit_config_default`] and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ArsFitConfig {
    pub estimator: ArsEstimator,
    pub p_student: usize,
    /// Budget `D` on `||M_A||_op`.
    pub budget: f64,
    /// Target rank for `IhtLowRank`; ignored otherwise.
    pub rank: usize,
    pub lambda: f64,
    /// Values `<= 0` select the automatic step.
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub range: ArsRange,
    pub project: bool,
    /// Start from scaled orthogonal blocks instead of zeros.
    pub orthogonal_init: bool,
    pub init_alpha: f64,
    pub init_seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ArsEstimateSummary {
    pub p_student: usize,
    pub d: usize,
    pub final_loss: f64,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    /// Step used by iterative fits, NaN for OLS.
    pub step_size: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ArsDiagnostics {
    pub op_norm_m: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub spectral_radius: f64,
    pub stability: ArsStability,
    /// NaN unless `p_student < p`.
    pub eta: f64,
    pub d_prime: f64,
}

pub struct ArsModel(ARModel);
pub struct ArsDataset(Dataset);
pub struct ArsEstimate(EstimateReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(ArsStatus, String);

impl From<arsysid::Error> for Fail {
    fn from(e: arsysid::Error) -> Self {
        use arsysid::Error as E;
        let status = match &e {
            E::DimensionMismatch(_) => ArsStatus::DimensionMismatch,
            E::NonFinite(_) => ArsStatus::Numerical,
            E::Io(_) | E::Json(_) | E::Csv(_) => ArsStatus::Io,
            _ => ArsStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ArsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ArsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            ArsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ArsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ArsStatus::InvalidArgument, msg.into())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_into(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if len != src.len() {
        return Err(Fail(
            ArsStatus::DimensionMismatch,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    if len > 0 {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    }
    Ok(())
}

unsafe fn path<'a>(ptr: *const c_char) -> Result<&'a Path, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn blocks_from_rows(values: &[f64], p: usize, d: usize) -> Vec<DMatrix<f64>> {
    (0..p)
        .map(|k| DMatrix::from_row_slice(d, d, &values[k * d * d..(k + 1) * d * d]))
        .collect()
}

fn blocks_to_rows(blocks: &[DMatrix<f64>]) -> Vec<f64> {
    blocks.iter().flat_map(|b| b.transpose().as_slice().to_vec()).collect()
}

fn parse_blocks(values: &[f64], p: usize, d: usize) -> Result<Vec<DMatrix<f64>>, Fail> {
    if p == 0 || d == 0 {
        return Err(invalid("p and d must be >= 1"));
    }
    if values.len() != p * d * d {
        return Err(Fail(
            ArsStatus::DimensionMismatch,
            format!("expected p*d*d = {} coefficients, got {}", p * d * d, values.len()),
        ));
    }
    Ok(blocks_from_rows(values, p, d))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `ars_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ars_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn ars_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Model from `p` row-major `d × d` blocks.
///
/// # Safety
/// `coeffs` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ars_model_new(
    p: usize,
    d: usize,
    coeffs: *const f64,
    len: usize,
    sigma: f64,
    out: *mut *mut ArsModel,
) -> ArsStatus {
    guard(|| {
        let blocks = parse_blocks(slice(coeffs, len, "coeffs")?, p, d)?;
        let model = ARModel::new(blocks, sigma)?;
        write_out(out, Box::into_raw(Box::new(ArsModel(model))), "out")
    })
}

/// Scaled Haar-orthogonal ground truth; `rank = 0` keeps full rank.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ars_model_ground_truth(
    p: usize,
    d: usize,
    alpha: f64,
    rank: usize,
    seed: u64,
    out: *mut *mut ArsModel,
) -> ArsStatus {
    guard(|| {
        let spec = GroundTruthSpec {
            alpha,
            rank: (rank > 0).then_some(rank),
            ..GroundTruthSpec::new(p, d, seed)
        };
        let model = generate_ground_truth(&spec)?;
        write_out(out, Box::into_raw(Box::new(ArsModel(model))), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `p` and `d` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_model_dims(model: *const ArsModel, p: *mut usize, d: *mut usize) -> ArsStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        write_out(p, m.p, "p")?;
        write_out(d, m.d, "d")
    })
}

/// Copies the `p·d·d` coefficients, row-major per block.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ars_model_copy_blocks(model: *const ArsModel, buf: *mut f64, len: usize) -> ArsStatus {
    guard(|| copy_into(&blocks_to_rows(&handle(model, "model")?.0.blocks), buf, len))
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ars_model_free(model: *mut ArsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Diagnostics at horizon `T`; `p_student = 0` skips the misspecification factors.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_diagnostics(
    model: *const ArsModel,
    horizon: usize,
    p_student: usize,
    out: *mut ArsDiagnostics,
) -> ArsStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let d = diagnose(m, horizon, (p_student > 0).then_some(p_student), &NormOptions::default())?;
        let stability = match d.stability {
            Stability::StrictlyStable => ArsStability::StrictlyStable,
            Stability::MarginallyStable => ArsStability::MarginallyStable,
            Stability::Explosive => ArsStability::Explosive,
        };
        let diag = ArsDiagnostics {
            op_norm_m: d.op_norm_m,
            kappa: d.kappa,
            zeta: d.zeta,
            spectral_radius: d.spectral_radius,
            stability,
            eta: d.eta.unwrap_or(f64::NAN),
            d_prime: d.d_prime.unwrap_or(f64::NAN),
        };
        write_out(out, diag, "out")
    })
}

/// Simulates `n` trajectories of length `t`. `noise_sigma < 0` uses the model's sigma.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_simulate(
    model: *const ArsModel,
    n: usize,
    t: usize,
    seed: u64,
    noise: ArsNoise,
    noise_sigma: f64,
    out: *mut *mut ArsDataset,
) -> ArsStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let family = match noise {
            ArsNoise::Gaussian => NoiseFamily::Gaussian,
            ArsNoise::Rademacher => NoiseFamily::Rademacher,
            ArsNoise::Uniform => NoiseFamily::Uniform,
        };
        let sigma = if noise_sigma < 0.0 { m.sigma } else { noise_sigma };
        let (ds, _) = simulator::simulate(m, &NoiseSpec::new(family, sigma)?, n, t, seed)?;
        write_out(out, Box::into_raw(Box::new(ArsDataset(ds))), "out")
    })
}

/// Dataset from `n·t·d` values laid out trajectory-major: entry `(n, t, i)`
/// at `(n·T + t)·d + i`.
///
/// # Safety
/// `data` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_new(
    n: usize,
    t: usize,
    d: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut ArsDataset,
) -> ArsStatus {
    guard(|| {
        let values = slice(data, len, "data")?;
        let ds = Dataset::new(n, t, d, values.to_vec())?;
        write_out(out, Box::into_raw(Box::new(ArsDataset(ds))), "out")
    })
}

/// # Safety
/// `ds` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_dims(
    ds: *const ArsDataset,
    n: *mut usize,
    t: *mut usize,
    d: *mut usize,
) -> ArsStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        write_out(n, ds.num_seqs, "n")?;
        write_out(t, ds.horizon, "t")?;
        write_out(d, ds.dim, "d")
    })
}

/// # Safety
/// `ds` must be a live handle; `buf` must hold `len = n·t·d` doubles.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_copy_data(ds: *const ArsDataset, buf: *mut f64, len: usize) -> ArsStatus {
    guard(|| copy_into(&handle(ds, "dataset")?.0.data, buf, len))
}

/// Writes the dataset CSV and its `<path>.json` sidecar.
///
/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_save(ds: *const ArsDataset, path_ptr: *const c_char) -> ArsStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        io::write_dataset(ds, path(path_ptr)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_load(path_ptr: *const c_char, out: *mut *mut ArsDataset) -> ArsStatus {
    guard(|| {
        let ds = io::read_dataset(path(path_ptr)?)?;
        write_out(out, Box::into_raw(Box::new(ArsDataset(ds))), "out")
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ars_dataset_free(ds: *mut ArsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Square loss of `p_student` row-major blocks on `ds`.
///
/// # Safety
/// `ds` must be a live handle; `coeffs` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_loss(
    ds: *const ArsDataset,
    coeffs: *const f64,
    len: usize,
    p_student: usize,
    range: ArsRange,
    out: *mut f64,
) -> ArsStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        let blocks = parse_blocks(slice(coeffs, len, "coeffs")?, p_student, ds.dim)?;
        let value = estimators::loss(&blocks, ds, range_mode(range))?;
        write_out(out, value, "out")
    })
}

fn range_mode(r: ArsRange) -> RangeMode {
    match r {
        ArsRange::Full => RangeMode::Full,
        ArsRange::FromP => RangeMode::FromP,
    }
}

/// Library defaults for `estimator` with `p_student` lags.
#[no_mangle]
pub extern "C" fn ars_fit_config_default(estimator: ArsEstimator, p_student: usize) -> ArsFitConfig {
    let base = EstimatorConfig::default();
    ArsFitConfig {
        estimator,
        p_student,
        budget: base.d_budget,
        rank: 0,
        lambda: base.lambda,
        step_size: 0.0,
        max_iters: base.max_iters,
        tol: base.tol,
        range: ArsRange::Full,
        project: false,
        orthogonal_init: false,
        init_alpha: 1.0,
        init_seed: 0,
    }
}

/// # Safety
/// `ds` must be a live handle; `cfg` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_fit(
    ds: *const ArsDataset,
    cfg: *const ArsFitConfig,
    out: *mut *mut ArsEstimate,
) -> ArsStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        let c = *handle(cfg, "cfg")?;
        let kind = match c.estimator {
            ArsEstimator::Ols => EstimatorKind::Ols,
            ArsEstimator::ConstrainedPgd => EstimatorKind::ConstrainedPgd,
            ArsEstimator::IhtLowRank => EstimatorKind::IhtLowRank,
            ArsEstimator::GroupNuclearProx => EstimatorKind::GroupNuclearProx,
        };
        let config = EstimatorConfig {
            kind,
            p_student: c.p_student,
            d_budget: c.budget,
            r: (c.rank > 0).then_some(c.rank),
            lambda: c.lambda,
            step_size: (c.step_size > 0.0).then_some(c.step_size),
            max_iters: c.max_iters,
            tol: c.tol,
            loss_range: range_mode(c.range),
            project: c.project,
            init: if c.orthogonal_init {
                InitStrategy::ScaledOrthogonal { alpha: c.init_alpha, seed: c.init_seed }
            } else {
                InitStrategy::Zeros
            },
        };
        let report = estimators::fit(ds, &config)?;
        if !report.final_loss.is_finite() {
            return Err(Fail(ArsStatus::Numerical, "fit diverged".into()));
        }
        write_out(out, Box::into_raw(Box::new(ArsEstimate(report))), "out")
    })
}

/// # Safety
/// `est` must be a live handle; `buf` must hold `len = p'·d·d` doubles.
#[no_mangle]
pub unsafe extern "C" fn ars_estimate_blocks(est: *const ArsEstimate, buf: *mut f64, len: usize) -> ArsStatus {
    guard(|| copy_into(&blocks_to_rows(&handle(est, "estimate")?.0.blocks), buf, len))
}

/// # Safety
/// `est` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ars_estimate_summary(est: *const ArsEstimate, out: *mut ArsEstimateSummary) -> ArsStatus {
    guard(|| {
        let r = &handle(est, "estimate")?.0;
        let summary = ArsEstimateSummary {
            p_student: r.p_student,
            d: r.blocks.first().map_or(0, |b| b.nrows()),
            final_loss: r.final_loss,
            objective: r.objective,
            iters: r.iters,
            converged: r.converged,
            step_size: r.step_size.unwrap_or(f64::NAN),
        };
        write_out(out, summary, "out")
    })
}

/// # Safety
/// `est` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ars_estimate_free(est: *mut ArsEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
