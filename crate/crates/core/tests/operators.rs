mod common;

use arsysid::operators::{
    apply_l, apply_m, build_l_blocks, check_norm_conditions, classify_stability, companion,
    condition_number, diagnose, materialize_m, misspec_factors, op_norm, spectral_radius, zeta,
    NormOptions, Stability,
};
use arsysid::{ARModel, Error};
use common::*;
use nalgebra::DMatrix;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

#[test]
fn shift_operator() {
    let blocks = vec![DMatrix::identity(2, 2)];
    let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    assert_eq!(apply_m(&blocks, 3, &v).unwrap(), vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    assert!(apply_m(&blocks, 3, &v[..4]).is_err());
    let zero = vec![DMatrix::zeros(2, 2); 2];
    assert!(apply_m(&zero, 3, &v).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn apply_m_matches_dense() {
    let mut r = rng(1);
    for _ in 0..20 {
        let d = random_range(&mut r, 1, 4);
        let p = random_range(&mut r, 1, 5);
        let t = random_range(&mut r, 1, 200 / d);
        let blocks: Vec<_> = (0..p).map(|_| gaussian(&mut r, d, d)).collect();
        let v = gaussian(&mut r, t * d, 1);
        let dense = dense_m(&blocks, t) * &v;
        let got = apply_m(&blocks, t, v.as_slice()).unwrap();
        assert!(rel(&got, dense.as_slice()) <= 1e-12 || dense.norm() == 0.0);
        assert_eq!(materialize_m(&blocks, t, usize::MAX).unwrap(), dense_m(&blocks, t));
    }
}

#[test]
fn materialized_scalar_and_nilpotent() {
    let m = materialize_m(&[DMatrix::from_element(1, 1, 0.7)], 2, 10).unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.7, 0.0]));
    let mut r = rng(2);
    let blocks: Vec<_> = (0..2).map(|_| gaussian(&mut r, 2, 2)).collect();
    let t = 4;
    let m = materialize_m(&blocks, t, 100).unwrap();
    let mut pow = DMatrix::identity(8, 8);
    for _ in 0..t {
        pow = &pow * &m;
    }
    assert!(pow.amax() == 0.0);
    assert!(matches!(materialize_m(&blocks, 100, 50), Err(Error::DenseCapExceeded { .. })));
}

#[test]
fn l_blocks_examples() {
    let l = build_l_blocks(&ARModel::scalar(&[0.5], 1.0), 6).unwrap();
    for (k, b) in l.blocks.iter().enumerate() {
        assert!((b[(0, 0)] - 0.5f64.powi(k as i32)).abs() < 1e-15);
    }
    let l = build_l_blocks(&ARModel::zeros(2, 3, 1.0), 4).unwrap();
    assert_eq!(l.blocks[0], DMatrix::identity(3, 3));
    assert!(l.blocks[1..].iter().all(|b| b.amax() == 0.0));
}

#[test]
fn l_matches_inverse_and_simulation() {
    let mut r = rng(3);
    for _ in 0..20 {
        let d = random_range(&mut r, 1, 4);
        let p = random_range(&mut r, 1, 4);
        let t = random_range(&mut r, 1, 40);
        let blocks = random_blocks(&mut r, p, d, 0.9);
        let m = ARModel::new(blocks.clone(), 1.0).unwrap();
        let l = build_l_blocks(&m, t).unwrap();
        let oracle = dense_l(&blocks, t);
        assert!((l.materialize(usize::MAX).unwrap() - &oracle).amax() <= 1e-10);
        let v = gaussian(&mut r, t * d, 1);
        let got = apply_l(&l, v.as_slice()).unwrap();
        assert!(rel(&got, (&oracle * &v).as_slice()) <= 1e-12);
        assert!(rel(&got, &naive_simulate(&blocks, v.as_slice(), d)) <= 1e-12);
    }
    let l = build_l_blocks(&ARModel::zeros(1, 2, 1.0), 3).unwrap();
    let v = [1.0, -2.0, 3.0, 0.5, 0.25, 9.0];
    assert_eq!(apply_l(&l, &v).unwrap(), v.to_vec());
}

#[test]
fn power_iteration_against_dense() {
    let id = DMatrix::<f64>::identity(5, 5);
    assert!((op_norm(&id, 1e-10, 1000).unwrap().value - 1.0).abs() < 1e-12);
    let diag = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
    assert!((op_norm(&diag, 1e-12, 1000).unwrap().value - 3.0).abs() < 1e-10);
    let a = gaussian(&mut rng(4), 50, 50);
    let est = op_norm(&a, 1e-12, 100_000).unwrap();
    let exact = common::op_norm(&a);
    assert!((est.value - exact).abs() / exact <= 1e-6, "{} vs {exact}", est.value);
}

#[test]
fn condition_number_examples() {
    let opts = NormOptions::default();
    let z = condition_number(&ARModel::zeros(2, 2, 1.0), 5, &opts).unwrap();
    assert!((z.kappa - 1.0).abs() < 1e-12);
    let c = condition_number(&ARModel::scalar(&[0.5], 1.0), 2, &opts).unwrap();
    let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
    let s = svals(&l);
    assert!((c.kappa - s[0] / s[1]).abs() < 1e-10);
    // Matrix-free route agrees with the dense one.
    let mut r = rng(5);
    let m = ARModel::new(random_blocks(&mut r, 3, 3, 0.8), 1.0).unwrap();
    let dense = condition_number(&m, 20, &opts).unwrap();
    let free = condition_number(&m, 20, &NormOptions::matrix_free(1e-12, 100_000)).unwrap();
    assert!((dense.kappa - free.kappa).abs() / dense.kappa < 1e-6);
    assert!(dense.kappa >= 1.0);
}

#[test]
fn sigma_min_identity() {
    let mut r = rng(6);
    for _ in 0..20 {
        let d = random_range(&mut r, 1, 4);
        let p = random_range(&mut r, 1, 4);
        let t = random_range(&mut r, 1, 30);
        let blocks = random_blocks(&mut r, p, d, 0.9);
        let m = ARModel::new(blocks.clone(), 1.0).unwrap();
        let rep = condition_number(&m, t, &NormOptions::default()).unwrap();
        let exact = sigma_min(&dense_l(&blocks, t));
        assert!((rep.sigma_min - exact).abs() / exact <= 1e-8, "{} vs {exact}", rep.sigma_min);
        let n = t * d;
        let via_gen = 1.0 / common::op_norm(&(DMatrix::identity(n, n) - dense_m(&blocks, t)));
        assert!((rep.sigma_min - via_gen).abs() / via_gen <= 1e-8);
    }
}

#[test]
fn stable_and_lemma_bounds() {
    let mut r = rng(7);
    let opts = NormOptions::default();
    for _ in 0..30 {
        let d = random_range(&mut r, 1, 3);
        let p = random_range(&mut r, 1, 3);
        let t = random_range(&mut r, p + 1, 25);
        let total = 1.0 + 0.5 * rand::Rng::random::<f64>(&mut r);
        let blocks = random_blocks(&mut r, p, d, total);
        let m_norm = common::op_norm(&dense_m(&blocks, t));
        let l = dense_l(&blocks, t);
        let (ln, smin) = (common::op_norm(&l), sigma_min(&l));
        assert!(smin >= 1.0 / (m_norm + 1.0) - 1e-9);
        if m_norm > 1.0 {
            let bound = (m_norm.powi(t as i32) - 1.0) / (m_norm - 1.0);
            assert!(ln <= bound * (1.0 + 1e-9));
        } else {
            assert!(ln <= 1.0 / (1.0 - m_norm) + 1e-6);
            assert!(ln >= 1.0 / (1.0 + m_norm) - 1e-6);
        }
        let model = ARModel::new(blocks, 1.0).unwrap();
        let z = zeta(&model, t).unwrap();
        let fro = l.norm();
        assert!(z >= fro / ((d as f64).sqrt() * t as f64) - 1e-12);
        assert!(fro >= ln - 1e-12);
        let _ = opts;
    }
}

#[test]
fn zeta_examples() {
    for t in [1, 5, 20] {
        assert!((zeta(&ARModel::scalar(&[1.0], 1.0), t).unwrap() - 1.0).abs() < 1e-15);
    }
    assert_eq!(zeta(&ARModel::zeros(2, 2, 1.0), 9).unwrap(), 1.0);
    assert!((zeta(&ARModel::scalar(&[2.0], 1.0), 4).unwrap() - 8.0).abs() < 1e-12);
}

#[test]
fn stability_classes() {
    let label = |a: f64| classify_stability(&ARModel::scalar(&[a], 1.0), 40, 0.05).unwrap().label;
    assert_eq!(label(0.5), Stability::StrictlyStable);
    assert_eq!(label(1.0), Stability::MarginallyStable);
    assert_eq!(label(1.5), Stability::Explosive);
    assert_eq!(
        classify_stability(&ARModel::zeros(2, 2, 1.0), 10, 0.05).unwrap().label,
        Stability::StrictlyStable
    );
    assert!(classify_stability(&ARModel::scalar(&[0.5], 1.0), 7, 0.05).is_err());
}

#[test]
fn companion_examples() {
    let c = companion(&ARModel::scalar(&[0.0, 0.0], 1.0), 10).unwrap();
    assert_eq!(c, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    assert_eq!(spectral_radius(&ARModel::scalar(&[0.0, 0.0], 1.0), 10).unwrap(), 0.0);
    let a = gaussian(&mut rng(8), 3, 3);
    let m = ARModel::new(vec![a.clone()], 1.0).unwrap();
    assert_eq!(companion(&m, 10).unwrap(), a);
    let rho = spectral_radius(&ARModel::scalar(&[0.5, 0.5], 1.0), 10).unwrap();
    assert!((rho - 1.0).abs() < 1e-12);
    assert!(companion(&ARModel::zeros(4, 3, 1.0), 5).is_err());
}

#[test]
fn misspecification_factors() {
    let mut r = rng(9);
    let opts = NormOptions::default();
    let blocks = random_blocks(&mut r, 3, 2, 0.5);
    let m = ARModel::new(blocks.clone(), 1.0).unwrap();
    assert_eq!(misspec_factors(&m, 3, 10, &opts).unwrap(), (1.0, 0.0));
    let mut short = blocks.clone();
    short[2].fill(0.0);
    let ms = ARModel::new(short, 1.0).unwrap();
    let (eta, dp) = misspec_factors(&ms, 2, 10, &opts).unwrap();
    assert_eq!(dp, 0.0);
    assert_eq!(eta, 1.0);
    // Oracle: ||(M - M_{1:p'}) L||.
    let t = 12;
    let mut head = blocks.clone();
    head[1].fill(0.0);
    head[2].fill(0.0);
    let oracle = common::op_norm(&((dense_m(&blocks, t) - dense_m(&head, t)) * dense_l(&blocks, t)));
    let (eta, dp) = misspec_factors(&m, 1, t, &opts).unwrap();
    assert!((dp - oracle).abs() <= 1e-10 * oracle.max(1.0));
    let m_norm = common::op_norm(&dense_m(&blocks, t));
    assert!(m_norm <= 0.5 + 1e-12);
    assert!(eta <= 2.0 / (1.0 - m_norm));
    assert!(misspec_factors(&m, 0, t, &opts).is_err());
}

#[test]
fn norm_condition_report() {
    let a = gaussian(&mut rng(10), 3, 3);
    let rep = check_norm_conditions(&[a.clone()], 10.0, 6, &NormOptions::default(), 1e-9).unwrap();
    let n = common::op_norm(&a);
    for v in [rep.sum_block_norms, rep.concat_norm, rep.sqrt_p_concat_norm, rep.op_norm_m] {
        assert!((v - n).abs() < 1e-9 * n);
    }
    let mut r = rng(11);
    for _ in 0..20 {
        let p = random_range(&mut r, 1, 4);
        let blocks: Vec<_> = (0..p).map(|_| gaussian(&mut r, 3, 3)).collect();
        let rep = check_norm_conditions(&blocks, 1.0, p + 3, &NormOptions::default(), 1e-9).unwrap();
        assert!(rep.upper_bounds_hold && rep.lower_bound_holds);
        let c = common::op_norm(&concat(&blocks));
        assert!((rep.concat_norm - c).abs() < 1e-9 * c);
    }
}

#[test]
fn zero_model_diagnostics() {
    let d = diagnose(&ARModel::zeros(2, 3, 1.0), 10, None, &NormOptions::default()).unwrap();
    assert_eq!(d.kappa, 1.0);
    assert_eq!(d.stability, Stability::StrictlyStable);
    assert_eq!(d.zeta, 1.0);
    let json = serde_json::to_value(&d).unwrap();
    let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    for k in ["op_norm_M", "kappa", "zeta", "spectral_radius", "stability", "eta", "d_prime"] {
        assert!(keys.iter().any(|x| x == k), "missing {k}");
    }
}
