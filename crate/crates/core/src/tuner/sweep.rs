//! Bias-grid sweeps over `(V_A, V_B)`.
//!
//! Every grid row (fixed `V_B`) is an independent warm-start chain walked in
//! serpentine order: even rows with ascending `V_A`, odd rows descending.
//! The first cell of a row, and any cell after a failure, starts cold. A
//! chain's arithmetic does not depend on which thread runs it, so the output
//! is identical for any level of concurrency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exciton::{exciton_state, stark_shift, ExcitonParams};
use crate::solver::{
    classify_regime, BiasPoint, DeviceModel, FieldSolution, Region, SolverConfig, TerminalBias,
};

/// Evenly spaced voltages `start, start + step, …` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl BiasRange {
    pub fn single(v: f64) -> BiasRange {
        BiasRange {
            start: v,
            stop: v,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err(Error::Input("bias range must be finite".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::Input(format!(
                "bias step must be > 0 (got {})",
                self.step
            )));
        }
        if self.stop < self.start {
            return Err(Error::Input(format!(
                "empty bias range: stop {} < start {}",
                self.stop, self.start
            )));
        }
        Ok(())
    }

    /// Grid values. The count is rounded so that a stop value reached up to
    /// round-off is included; values are snapped to 1e-12 V.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|k| {
                let v = self.start + self.step * k as f64;
                (v * 1e12).round() / 1e12
            })
            .collect())
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.start, self.stop)
    }
}

/// Optional column groups of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    Fields,
    Currents,
    Regime,
    Fss,
    Theta0,
    AlgebraicFss,
    Stark,
}

impl SweepOutput {
    pub const ALL: [SweepOutput; 7] = [
        SweepOutput::Fields,
        SweepOutput::Currents,
        SweepOutput::Regime,
        SweepOutput::Fss,
        SweepOutput::Theta0,
        SweepOutput::AlgebraicFss,
        SweepOutput::Stark,
    ];
}

fn all_outputs() -> Vec<SweepOutput> {
    SweepOutput::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub va: BiasRange,
    pub vb: BiasRange,
    pub vc: TerminalBias,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<SweepOutput>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.va.validate()?;
        self.vb.validate()?;
        if let TerminalBias::Fixed(v) = self.vc {
            if !v.is_finite() {
                return Err(Error::Input("V_C must be finite".into()));
            }
        }
        Ok(())
    }

    /// Requested groups, deduplicated, in canonical column order.
    pub fn output_set(&self) -> BTreeSet<SweepOutput> {
        self.outputs.iter().copied().collect()
    }

    pub fn shape(&self) -> Result<(usize, usize)> {
        Ok((self.va.values()?.len(), self.vb.values()?.len()))
    }
}

/// Converged values of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellValues {
    /// `(E_x, E_y, E_z)`, V/m.
    pub field: [f64; 3],
    /// `(I_A, I_B, I_C)`, A.
    pub currents: [f64; 3],
    pub i_junction: f64,
    pub region: Region,
    pub newton_iters: usize,
    pub residual: f64,
    /// µeV.
    pub fss: f64,
    pub theta0: Option<f64>,
    /// µeV.
    pub algebraic_fss: f64,
    /// eV.
    pub mean_energy: f64,
    /// µeV relative to `E0`.
    pub stark_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Row-major index `j * n_va + i`.
    pub index: usize,
    /// Column (V_A) index.
    pub i: usize,
    /// Row (V_B) index.
    pub j: usize,
    pub bias: BiasPoint,
    /// `Err` carries the solver diagnostic of a failed cell.
    pub outcome: std::result::Result<CellValues, String>,
}

impl SweepRecord {
    pub fn values(&self) -> Option<&CellValues> {
        self.outcome.as_ref().ok()
    }

    pub fn va(&self) -> f64 {
        self.bias.va.voltage().unwrap_or(f64::NAN)
    }

    pub fn vb(&self) -> f64 {
        self.bias.vb.voltage().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub nodes: usize,
    pub cells: usize,
    pub unknowns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    /// Hash of the run configuration; filled in by the caller.
    pub config_hash: String,
    pub va: Vec<f64>,
    pub vb: Vec<f64>,
    pub vc: TerminalBias,
    pub outputs: Vec<SweepOutput>,
    /// Zero-bias high-energy eigenaxis used for the algebraic FSS, rad.
    pub theta_ref: f64,
    pub regime_threshold: f64,
    pub mesh: MeshStats,
    pub cells: usize,
    pub failed_cells: usize,
    pub jobs: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub meta: SweepMeta,
    /// One record per grid cell, ordered by `index`.
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn ok_values(&self) -> impl Iterator<Item = (&SweepRecord, &CellValues)> {
        self.records
            .iter()
            .filter_map(|r| r.values().map(|v| (r, v)))
    }

    pub fn record(&self, i: usize, j: usize) -> Option<&SweepRecord> {
        let n = self.meta.va.len();
        if i < n && j < self.meta.vb.len() {
            self.records.get(j * n + i)
        } else {
            None
        }
    }
}

/// High-energy eigenaxis at zero applied bias, where the sheet is at
/// equilibrium and only the built-in field acts. Falls back to 0 when the
/// zero-bias doublet is degenerate.
pub fn reference_axis(model: &DeviceModel, exciton: &ExcitonParams) -> f64 {
    let ez = model.geometry().equilibrium_field();
    exciton_state(exciton, [0.0, 0.0, ez]).theta0.unwrap_or(0.0)
}

/// Exciton-level values of a converged solve.
pub fn cell_values(
    solution: &FieldSolution,
    exciton: &ExcitonParams,
    theta_ref: f64,
    regime_threshold: f64,
) -> CellValues {
    let field = solution.e_vector();
    let state = exciton_state(exciton, field);
    CellValues {
        field,
        currents: solution.terminal_current,
        i_junction: solution.i_junction,
        region: classify_regime(solution, regime_threshold),
        newton_iters: solution.newton_iters,
        residual: solution.residual,
        fss: state.fss,
        theta0: state.theta0,
        algebraic_fss: state.algebraic_fss(theta_ref),
        mean_energy: state.mean_energy,
        stark_shift: stark_shift(exciton, field[2]),
    }
}

fn run_row(
    j: usize,
    va: &[f64],
    vb: f64,
    vc: TerminalBias,
    model: &DeviceModel,
    exciton: &ExcitonParams,
    cfg: &SolverConfig,
    theta_ref: f64,
) -> Vec<SweepRecord> {
    let n = va.len();
    let order: Vec<usize> = if j % 2 == 0 {
        (0..n).collect()
    } else {
        (0..n).rev().collect()
    };
    let mut warm: Option<FieldSolution> = None;
    let mut row = Vec::with_capacity(n);
    for i in order {
        let bias = BiasPoint::new(va[i], vb, vc);
        let outcome = match model.solve(&bias, warm.as_ref(), cfg) {
            Ok(sol) => {
                let v = cell_values(&sol, exciton, theta_ref, cfg.regime_threshold);
                warm = Some(sol);
                Ok(v)
            }
            Err(e) => {
                warm = None;
                Err(e.to_string())
            }
        };
        row.push(SweepRecord {
            index: j * n + i,
            i,
            j,
            bias,
            outcome,
        });
    }
    row.sort_by_key(|r| r.i);
    row
}

/// Evaluates the grid. `jobs = 1` runs serially on the calling thread;
/// larger values use a dedicated thread pool of that size.
pub fn run_bias_sweep(
    spec: &SweepSpec,
    model: &DeviceModel,
    exciton: &ExcitonParams,
    cfg: &SolverConfig,
    jobs: usize,
) -> Result<SweepResult> {
    spec.validate()?;
    cfg.validate()?;
    exciton.validate()?;
    let started = Instant::now();
    let va = spec.va.values()?;
    let vb = spec.vb.values()?;
    let theta_ref = reference_axis(model, exciton);
    let jobs = jobs.max(1);

    let row = |j: usize| run_row(j, &va, vb[j], spec.vc, model, exciton, cfg, theta_ref);
    let rows: Vec<Vec<SweepRecord>> = if jobs == 1 {
        (0..vb.len()).map(row).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Input(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| (0..vb.len()).into_par_iter().map(row).collect())
    };
    let records: Vec<SweepRecord> = rows.into_iter().flatten().collect();
    let failed_cells = records.iter().filter(|r| r.outcome.is_err()).count();
    let mesh = model.mesh();
    Ok(SweepResult {
        meta: SweepMeta {
            config_hash: String::new(),
            cells: records.len(),
            va,
            vb,
            vc: spec.vc,
            outputs: spec.output_set().into_iter().collect(),
            theta_ref,
            regime_threshold: cfg.regime_threshold,
            mesh: MeshStats {
                nodes: mesh.node_count(),
                cells: mesh.cells().len(),
                unknowns: model.unknowns(),
            },
            failed_cells,
            jobs,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        records,
    })
}
