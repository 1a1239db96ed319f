//! Grid tuning, slope fits and curve comparison over result tables.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sweep::{ResultRecord, ResultTable};
use crate::error::{Error, Result};
use crate::model::EstimatorKind;
use crate::operators::fit_line;

/// Horizontal axis of a scaling plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    /// `β/γ = NT / p'dr`.
    #[default]
    BetaOverGamma,
    /// `β̃/γ` with `β̃ = β / ln(1 + √N)`.
    BetaTildeOverGamma,
}

impl XAxis {
    pub fn value(self, r: &ResultRecord) -> f64 {
        match self {
            XAxis::BetaOverGamma => r.beta / r.gamma,
            XAxis::BetaTildeOverGamma => r.beta_tilde / r.gamma,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            XAxis::BetaOverGamma => "beta / gamma",
            XAxis::BetaTildeOverGamma => "beta_tilde / gamma",
        }
    }
}

impl std::str::FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta_over_gamma" | "beta" => Ok(XAxis::BetaOverGamma),
            "beta_tilde_over_gamma" | "beta_tilde" => Ok(XAxis::BetaTildeOverGamma),
            other => Err(Error::Parse(format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// OLS of `ln(error)` on `ln(x)` over records with finite positive values.
pub fn fit_slope<'a>(records: impl IntoIterator<Item = &'a ResultRecord>, axis: XAxis) -> Result<SlopeFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .into_iter()
        .map(|r| (axis.value(r), r.error_frob_sq))
        .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs >= 3 distinct x values, got {}",
            distinct.len()
        )));
    }
    let line = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate x".into()))?;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let tss: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - line.rss / tss } else { 1.0 };
    Ok(SlopeFit { slope: line.slope, intercept: line.intercept, r_squared, points: xs.len() })
}

/// Winner of a (λ, step) grid for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedCell {
    pub d: usize,
    pub p: usize,
    pub p_student: usize,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub estimator: EstimatorKind,
    pub lambda: f64,
    pub step_size: Option<f64>,
    /// Seed-averaged error at the selected point.
    pub error_frob_sq: f64,
    /// Every grid point was present with a finite error.
    pub complete: bool,
}

type CellKey = (usize, usize, usize, usize, usize, usize, EstimatorKind);

fn cell_key(r: &ResultRecord) -> CellKey {
    (r.d, r.p, r.p_student, r.r, r.n, r.t, r.estimator)
}

fn hyper_key(r: &ResultRecord) -> (u64, Option<u64>) {
    (r.lambda.to_bits(), r.step_size.map(f64::to_bits))
}

/// Selects the seed-averaged argmin over `(λ, step)` for every cell; exact
/// ties go to the larger λ, then the larger step. Averages are recomputed
/// from raw rows when present, otherwise mean rows are used.
pub fn tune_grid(table: &ResultTable) -> Vec<TunedCell> {
    let use_raw = table.raw().next().is_some();
    let mut sums: BTreeMap<CellKey, BTreeMap<(u64, Option<u64>), (f64, usize, bool)>> = BTreeMap::new();
    let mut grid: BTreeMap<EstimatorKind, Vec<(u64, Option<u64>)>> = BTreeMap::new();
    for r in table.records.iter().filter(|r| r.is_mean() != use_raw) {
        let hk = hyper_key(r);
        let g = grid.entry(r.estimator).or_default();
        if !g.contains(&hk) {
            g.push(hk);
        }
        let e = sums.entry(cell_key(r)).or_default().entry(hk).or_insert((0.0, 0, true));
        if r.error_frob_sq.is_finite() {
            e.0 += r.error_frob_sq;
            e.1 += 1;
        } else {
            e.2 = false;
        }
    }
    let mut out = Vec::new();
    for (key, points) in sums {
        let expected = grid[&key.6].len();
        let mut complete = points.len() == expected;
        let mut best: Option<(f64, f64, Option<f64>)> = None;
        for (&(lb, sb), &(sum, count, all_finite)) in &points {
            complete &= all_finite;
            if count == 0 {
                continue;
            }
            let cand = (sum / count as f64, f64::from_bits(lb), sb.map(f64::from_bits));
            let better = match best {
                None => true,
                Some(b) => match cand.0.total_cmp(&b.0) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => (cand.1, cand.2.unwrap_or(0.0)) > (b.1, b.2.unwrap_or(0.0)),
                },
            };
            if better {
                best = Some(cand);
            }
        }
        if !complete {
            log::warn!("incomplete grid for cell {key:?}; best over available points reported");
        }
        let Some((err, lambda, step)) = best else { continue };
        let (d, p, p_student, r, n, t, estimator) = key;
        out.push(TunedCell { d, p, p_student, r, n, t, estimator, lambda, step_size: step, error_frob_sq: err, complete });
    }
    out
}

/// Piecewise log-log linear interpolation of a curve sorted by `x`.
pub fn interpolate_loglog(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x >= x0 && x <= x1 {
            if x1 == x0 {
                return Some(y0);
            }
            let s = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
            return Some((y0.ln() + s * (y1.ln() - y0.ln())).exp());
        }
    }
    (curve.len() == 1 && x == first.0).then_some(first.1)
}

/// Largest pairwise ratio between curves, evaluated at every curve's own
/// x-points inside the shared x-range. `None` when the ranges do not overlap.
pub fn max_pairwise_ratio(curves: &[Vec<(f64, f64)>]) -> Option<f64> {
    let lo = curves.iter().map(|c| c.first().map(|p| p.0)).collect::<Option<Vec<_>>>()?;
    let hi = curves.iter().map(|c| c.last().map(|p| p.0)).collect::<Option<Vec<_>>>()?;
    let lo = lo.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let hi = hi.into_iter().fold(f64::INFINITY, f64::min);
    if lo > hi {
        return None;
    }
    let mut xs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.iter().map(|p| p.0))
        .filter(|&x| x >= lo && x <= hi)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut worst: f64 = 1.0;
    for x in xs {
        let ys: Vec<f64> = curves.iter().filter_map(|c| interpolate_loglog(c, x)).collect();
        let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(max / min);
    }
    Some(worst)
}

/// Seed-averaged `(x, error)` curves keyed by `p'`.
pub fn curves_by_p_student(table: &ResultTable, axis: XAxis) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut out: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in table.averaged().filter(|r| r.error_frob_sq.is_finite()) {
        out.entry(r.p_student).or_default().push((axis.value(r), r.error_frob_sq));
    }
    for c in out.values_mut() {
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}
