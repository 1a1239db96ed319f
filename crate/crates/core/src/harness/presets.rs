//! Named sweep configurations.

use super::sweep::{InitKind, SweepSpec, TBasis};
use crate::error::{Error, Result};
use crate::model::EstimatorKind;

pub const PRESET_NAMES: [&str; 4] = ["appendix-e-full", "appendix-e-desk", "misspec-desk", "lowrank-desk"];

const FULL_LAMBDAS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

pub fn preset(name: &str) -> Result<SweepSpec> {
    let base = SweepSpec::default();
    let spec = match name {
        // Full-rank rate grid with the complete tuning grids.
        "appendix-e-full" => SweepSpec {
            d: vec![5, 10, 15],
            p: vec![5, 10, 15],
            n: vec![1, 5, 10],
            t_multipliers: vec![1.0, 5.0, 10.0, 25.0, 50.0],
            lambda: FULL_LAMBDAS.to_vec(),
            step_size: vec![1e-1, 1e-2, 1e-3],
            ..base
        },
        "appendix-e-desk" => SweepSpec {
            d: vec![5, 10],
            p: vec![5, 10],
            n: vec![5],
            ..base
        },
        "misspec-desk" => SweepSpec {
            d: vec![5],
            p: vec![15],
            p_student: vec![5, 10, 15],
            n: vec![5],
            t_basis: TBasis::Student,
            ..base
        },
        "lowrank-desk" => SweepSpec {
            d: vec![10],
            p: vec![5],
            r: vec![3],
            n: vec![5],
            estimators: vec![EstimatorKind::Ols, EstimatorKind::GroupNuclearProx],
            lambda: FULL_LAMBDAS[..5].to_vec(),
            step_size: vec![1e-1, 1e-2],
            init: InitKind::ScaledOrthogonal,
            ..base
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown preset `{other}` (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}
