//! Scaling-law experiments: ground truths, sweeps, tuning, slope fits and
//! CSV/SVG export.

mod analysis;
mod export;
mod presets;
mod sweep;
mod truth;

pub use analysis::{
    curves_by_p_student, fit_slope, interpolate_loglog, max_pairwise_ratio, tune_grid, SlopeFit,
    TunedCell, XAxis,
};
pub use export::{
    export_csv, export_plot, read_csv, render_plot, table_from_csv, table_to_csv, PlotFrame,
    PlotOptions, SeriesBy, CSV_HEADER,
};
pub use presets::{preset, PRESET_NAMES};
pub use sweep::{
    horizon_for, run_cell, run_sweep, run_sweep_with_workers, truth_diagnostics, truth_for,
    CellConfig, CellOptions, InitKind, ResultRecord, ResultTable, SweepSpec, TBasis, STATUS_MEAN,
    STATUS_MEAN_PARTIAL, STATUS_NOT_CONVERGED, STATUS_OK,
};
pub use truth::{
    generate_ground_truth, haar_orthogonal, student_init, GroundTruthSpec, DEFAULT_ALPHA,
    DEFAULT_ALPHA_INIT,
};
