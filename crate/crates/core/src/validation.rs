//! Self-check suites run by `arsysid validate`: operator identities, gradient
//! checks, norm inequalities, the loss decomposition, the OLS optimality
//! inequality and concentration of the training error.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{grad_loss, loss, ols};
use crate::linalg::{self, frob_sq};
use crate::model::{ARModel, NoiseSpec, RangeMode};
use crate::operators::{
    apply_l, build_l_blocks, check_norm_conditions, materialize_m, misspec_factors, NormOptions,
};
use crate::rng::{self, Domain};
use crate::simulator::{sample_noise, simulate, simulate_from_noise};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &'static str, instances: usize, worst: f64, tolerance: f64, passed: bool) -> Self {
        CheckOutcome { name, instances, worst, tolerance, passed }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Random blocks rescaled so that `sum_k ||A_k||_op = total`.
fn random_blocks(rng: &mut ChaCha8Rng, p: usize, d: usize, total: f64) -> Vec<DMatrix<f64>> {
    let blocks: Vec<DMatrix<f64>> = (0..p).map(|_| gaussian(rng, d, d, 1.0)).collect();
    let s: f64 = blocks.iter().map(linalg::spectral_norm).sum();
    blocks.into_iter().map(|b| b * (total / s.max(f64::MIN_POSITIVE))).collect()
}

fn identity_suite(seed: u64, count: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng::stream(seed, Domain::Validation, 1);
    let (mut worst_id, mut worst_sim) = (0.0f64, 0.0f64);
    for k in 0..count {
        let d = rng.random_range(1..=4);
        let p = rng.random_range(1..=4);
        let t = rng.random_range(p..=30);
        let total = rng.random_range(0.1..1.5);
        let m = ARModel::new(random_blocks(&mut rng, p, d, total), 1.0)?;
        let mm = materialize_m(&m.blocks, t, usize::MAX)?;
        let l = build_l_blocks(&m, t)?;
        let ld = l.materialize(usize::MAX)?;
        let n = t * d;
        let resid = (DMatrix::identity(n, n) - mm) * &ld - DMatrix::identity(n, n);
        worst_id = worst_id.max(resid.amax());
        let e = sample_noise(&NoiseSpec::gaussian(1.0), 2, t, d, seed ^ k as u64)?;
        let ds = simulate_from_noise(&m, &e)?;
        for j in 0..2 {
            let via_l = apply_l(&l, e.column(j))?;
            let x = ds.trajectory(j);
            let num: f64 = x.iter().zip(&via_l).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            worst_sim = worst_sim.max(num / den);
        }
    }
    Ok(vec![
        CheckOutcome::new("(I - M) L = I", count, worst_id, 1e-10, worst_id <= 1e-10),
        CheckOutcome::new("simulate = L xi", count, worst_sim, 1e-10, worst_sim <= 1e-10),
    ])
}

fn gradient_suite(seed: u64, count: usize) -> Result<CheckOutcome> {
    let mut rng = rng::stream(seed, Domain::Validation, 2);
    let mut worst = 0.0f64;
    for k in 0..count {
        let d = rng.random_range(1..=3);
        let p = rng.random_range(1..=3);
        let ps = rng.random_range(1..=3);
        let truth = ARModel::new(random_blocks(&mut rng, p, d, 0.6), 1.0)?;
        let (ds, _) = simulate(&truth, &NoiseSpec::gaussian(1.0), 2, 12, seed ^ (k as u64) << 8)?;
        let blocks: Vec<DMatrix<f64>> = (0..ps).map(|_| gaussian(&mut rng, d, d, 0.3)).collect();
        let range = if k % 2 == 0 { RangeMode::Full } else { RangeMode::FromP };
        let g = grad_loss(&blocks, &ds, range)?;
        let mut fd = DMatrix::zeros(d, ps * d);
        let h = 1e-6;
        for kk in 0..ps {
            for i in 0..d {
                for j in 0..d {
                    let mut plus = blocks.clone();
                    plus[kk][(i, j)] += h;
                    let mut minus = blocks.clone();
                    minus[kk][(i, j)] -= h;
                    fd[(i, kk * d + j)] = (loss(&plus, &ds, range)? - loss(&minus, &ds, range)?) / (2.0 * h);
                }
            }
        }
        let rel = (&g - &fd).norm() / g.norm().max(1e-12);
        worst = worst.max(rel);
    }
    Ok(CheckOutcome::new("gradient vs finite differences", count, worst, 1e-5, worst <= 1e-5))
}

fn norm_suite(seed: u64, count: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng::stream(seed, Domain::Validation, 3);
    let opts = NormOptions::default();
    let tol = 1e-6;
    let (mut prop, mut sandwich, mut delta, mut sigma, mut eta) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        let d = rng.random_range(1..=4);
        let p = rng.random_range(1..=4);
        let t = rng.random_range(p + 1..=20);
        let total = rng.random_range(0.05..0.95);
        let blocks = random_blocks(&mut rng, p, d, total);
        let rep = check_norm_conditions(&blocks, 1.0, t, &opts, tol)?;
        // Positive margins mean a violated inequality.
        let upper = rep.op_norm_m - rep.sum_block_norms.min(rep.sqrt_p_concat_norm);
        let lower = rep.concat_norm - rep.op_norm_m;
        prop = prop.max(upper / rep.op_norm_m.max(1e-300));
        sandwich = sandwich.max(lower / rep.op_norm_m.max(1e-300));

        let mm = materialize_m(&blocks, t, usize::MAX)?;
        let f = frob_sq(&mm);
        let b = frob_sq(&linalg::concat_blocks(&blocks, d));
        let lo = (t - p) as f64 * b;
        let hi = t as f64 * b;
        delta = delta.max(((lo - f) / f).max((f - hi) / f));

        let m = ARModel::new(blocks, 1.0)?;
        let l = build_l_blocks(&m, t)?.materialize(usize::MAX)?;
        let smin = linalg::sigma_min(&l);
        let bound = 1.0 / (rep.op_norm_m + 1.0);
        sigma = sigma.max((bound - smin) / bound);

        if p > 1 && rep.op_norm_m < 1.0 {
            let ps = rng.random_range(1..p);
            let (e, _) = misspec_factors(&m, ps, t, &opts)?;
            let cap = 2.0 / (1.0 - rep.op_norm_m);
            eta = eta.max((e - cap) / cap);
        }
    }
    let ok = |v: f64| v <= tol;
    Ok(vec![
        CheckOutcome::new("||M|| <= min(sum ||A_k||, sqrt(p) ||A||)", count, prop, tol, ok(prop)),
        CheckOutcome::new("||A|| <= ||M||", count, sandwich, tol, ok(sandwich)),
        CheckOutcome::new("(T-p)||B||^2 <= ||Delta||_F^2 <= T||B||^2", count, delta, tol, ok(delta)),
        CheckOutcome::new("sigma_min(L) >= 1/(D+1)", count, sigma, tol, ok(sigma)),
        CheckOutcome::new("eta <= 2/(1-||M||)", count, eta, tol, ok(eta)),
    ])
}

fn decomposition_suite(seed: u64, count: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng::stream(seed, Domain::Validation, 4);
    let (mut worst_dec, mut worst_erm) = (0.0f64, 0.0f64);
    for k in 0..count {
        let d = rng.random_range(1..=3);
        let p = rng.random_range(1..=3);
        let ps = rng.random_range(1..=p);
        let t = rng.random_range(p + 2..=25);
        let n = rng.random_range(1..=3);
        let truth = ARModel::new(random_blocks(&mut rng, p, d, 0.7), 1.0)?;
        let (ds, e) = simulate(&truth, &NoiseSpec::gaussian(1.0), n, t, seed.wrapping_add(k as u64))?;
        let star = truth.blocks_padded(ps);
        let a: Vec<DMatrix<f64>> = (0..ps).map(|_| gaussian(&mut rng, d, d, 0.3)).collect();
        let diff: Vec<DMatrix<f64>> = a.iter().zip(&star).map(|(x, y)| x - y).collect();
        let delta = materialize_m(&diff, t, usize::MAX)?;
        let m_star = materialize_m(&star, t, usize::MAX)?;
        let l = build_l_blocks(&truth, t)?.materialize(usize::MAX)?;
        let x = &l * &e.values;
        let dx = &delta * &x;
        let nt = (n * t) as f64;
        let id = DMatrix::identity(t * d, t * d);
        let lhs = nt * (loss(&a, &ds, RangeMode::Full)? - loss(&star, &ds, RangeMode::Full)?);
        let rhs = frob_sq(&dx) + 2.0 * dx.dot(&((m_star - id) * &x));
        let scale = lhs.abs().max(rhs.abs()).max(1e-12);
        worst_dec = worst_dec.max((lhs - rhs).abs() / scale);

        // OLS with p' = p: ||Δ L E||^2 <= 2 Tr(E^T Δ L E).
        let fit = ols(&ds, p, RangeMode::Full)?;
        let diff: Vec<DMatrix<f64>> = fit.blocks.iter().zip(&truth.blocks).map(|(x, y)| x - y).collect();
        let delta = materialize_m(&diff, t, usize::MAX)?;
        let dx = &delta * ds.stacked();
        let quad = frob_sq(&dx);
        let cross = 2.0 * e.values.dot(&dx);
        let slack = (cross - quad) / quad.max(cross.abs()).max(1e-12);
        worst_erm = worst_erm.max(-slack);
    }
    Ok(vec![
        CheckOutcome::new("loss decomposition", count, worst_dec, 1e-8, worst_dec <= 1e-8),
        CheckOutcome::new("OLS optimality inequality", count, worst_erm, 1e-8, worst_erm <= 1e-8),
    ])
}

fn concentration_suite(seed: u64, count: usize) -> Result<CheckOutcome> {
    let truth = crate::harness::generate_ground_truth(&crate::harness::GroundTruthSpec::new(3, 5, seed))?;
    let losses: Vec<f64> = (0..count)
        .map(|k| {
            let (ds, _) = simulate(&truth, &NoiseSpec::gaussian(1.0), 2, 100, seed.wrapping_add(1000 + k as u64))?;
            loss(&truth.blocks, &ds, RangeMode::Full)
        })
        .collect::<Result<_>>()?;
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = (mean - 5.0).abs() / (var / n).sqrt();
    Ok(CheckOutcome::new("L(A*) concentrates at sigma^2 d (z-score)", count, z, 5.0, z <= 5.0))
}

/// Runs every suite; `quick` shrinks instance counts.
pub fn run_suites(quick: bool, seed: u64) -> Result<Vec<CheckOutcome>> {
    let scale = |full: usize, q: usize| if quick { q } else { full };
    let mut out = identity_suite(seed, scale(50, 10))?;
    out.push(gradient_suite(seed, scale(20, 5))?);
    out.extend(norm_suite(seed, scale(100, 20))?);
    out.extend(decomposition_suite(seed, scale(20, 5))?);
    out.push(concentration_suite(seed, scale(200, 50))?);
    Ok(out)
}

/// Plain-text table, one row per check.
pub fn format_table(rows: &[CheckOutcome]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  {:>9}  {:>12}  {:>9}  result\n", "check", "instances", "worst", "tol");
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:>9}  {:>12.3e}  {:>9.1e}  {}\n",
            r.name,
            r.instances,
            r.worst,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let rows = run_suites(true, 0).unwrap();
        assert!(rows.iter().all(|r| r.passed), "{}", format_table(&rows));
    }
}
