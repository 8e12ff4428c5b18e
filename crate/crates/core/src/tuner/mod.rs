//! Bias sweeps and zero-FSS search.

mod nelder_mead;
mod sweep;
mod tune;

pub use nelder_mead::{nelder_mead, SimplexOptions, SimplexOutcome};
pub use sweep::{
    cell_values, reference_axis, run_bias_sweep, BiasRange, CellValues, MeshStats, SweepMeta,
    SweepOutput, SweepRecord, SweepResult, SweepSpec,
};
pub use tune::{
    eigenaxis_rotation_check, find_zero_fss, iso_fss_pairs, iso_fss_points, rotation_between,
    IsoCandidate, IsoPair, RotationCheck, RotationStatus, TuneOptions, TuneResult, CROSSING_MARGIN,
};
