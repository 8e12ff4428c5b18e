//! Zero-FSS search, eigenaxis-rotation check and iso-FSS pairs.

use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;

use super::nelder_mead::{nelder_mead, SimplexOptions};
use super::sweep::SweepResult;
use crate::device::Terminal;
use crate::error::{Error, Result};
use crate::exciton::{axis_rotation, exciton_state, ExcitonParams, ExcitonState};
use crate::solver::{
    classify_regime, BiasPoint, DeviceModel, FieldSolution, Region, SolverConfig, TerminalBias,
};

/// A rotation at least this close to π/2 counts as an eigenaxis swap, rad.
pub const CROSSING_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationStatus {
    Crossing,
    NoCrossing,
    /// An endpoint is degenerate or failed to solve.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationCheck {
    pub start: BiasPoint,
    pub end: BiasPoint,
    pub theta_start: Option<f64>,
    pub theta_end: Option<f64>,
    pub fss_start: Option<f64>,
    pub fss_end: Option<f64>,
    /// `|θ_end − θ_start|` folded to `[0, π/2]`; `None` when indeterminate.
    pub rotation: Option<f64>,
    pub status: RotationStatus,
}

/// Classifies a rotation between two exciton states.
pub fn rotation_between(
    a: Option<&ExcitonState>,
    b: Option<&ExcitonState>,
) -> (Option<f64>, RotationStatus) {
    match (a.and_then(|s| s.theta0), b.and_then(|s| s.theta0)) {
        (Some(ta), Some(tb)) => {
            let r = axis_rotation(ta, tb);
            let status = if r >= PI / 2.0 - CROSSING_MARGIN {
                RotationStatus::Crossing
            } else {
                RotationStatus::NoCrossing
            };
            (Some(r), status)
        }
        _ => (None, RotationStatus::Indeterminate),
    }
}

/// Solves both ends of a bias segment and compares their eigenaxes.
pub fn eigenaxis_rotation_check(
    start: &BiasPoint,
    end: &BiasPoint,
    model: &DeviceModel,
    exciton: &ExcitonParams,
    cfg: &SolverConfig,
) -> RotationCheck {
    let s0 = model
        .solve(start, None, cfg)
        .ok()
        .map(|s| exciton_state(exciton, s.e_vector()));
    let s1 = model
        .solve(end, None, cfg)
        .ok()
        .map(|s| exciton_state(exciton, s.e_vector()));
    let (rotation, status) = rotation_between(s0.as_ref(), s1.as_ref());
    RotationCheck {
        start: *start,
        end: *end,
        theta_start: s0.and_then(|s| s.theta0),
        theta_end: s1.and_then(|s| s.theta0),
        fss_start: s0.map(|s| s.fss),
        fss_end: s1.map(|s| s.fss),
        rotation,
        status,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneOptions {
    /// Target splitting, µeV.
    pub tol: f64,
    /// Search box for A, B, C, V.
    pub bounds: [(f64, f64); 3],
    /// Restart grid points per free terminal.
    pub coarse_points: usize,
    /// Number of best coarse points used as simplex starts.
    pub restarts: usize,
    /// Initial simplex edge as a fraction of the box side.
    pub initial_step_fraction: f64,
    /// Simplex size at which a run stops, V.
    pub x_tol: f64,
    /// Evaluation budget per simplex run.
    pub max_evals: usize,
    /// Half-length of the eigenaxis probe segment, V.
    pub probe_step: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            tol: 1.5,
            bounds: [(-4.0, 5.0); 3],
            coarse_points: 5,
            restarts: 4,
            initial_step_fraction: 0.125,
            x_tol: 1e-7,
            max_evals: 400,
            probe_step: 0.05,
        }
    }
}

impl TuneOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Input(format!(
                "tolerance must be > 0 (got {})",
                self.tol
            )));
        }
        for (lo, hi) in self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Input(format!("invalid search bounds [{lo}, {hi}]")));
            }
        }
        if self.coarse_points < 1 || self.max_evals < 1 {
            return Err(Error::Input(
                "coarse_points and max_evals must be ≥ 1".into(),
            ));
        }
        if !(self.probe_step > 0.0) || !(self.x_tol > 0.0) || !(self.initial_step_fraction > 0.0) {
            return Err(Error::Input(
                "probe_step, x_tol and initial_step_fraction must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub bias: BiasPoint,
    pub free_terminals: Vec<Terminal>,
    /// Achieved splitting, µeV.
    pub fss: f64,
    pub tol: f64,
    pub converged: bool,
    pub theta0: Option<f64>,
    /// Eigenaxis swap across the optimum along the approach direction.
    pub rotation: RotationCheck,
    /// eV.
    pub mean_energy: f64,
    /// V/m.
    pub field: [f64; 3],
    pub currents: [f64; 3],
    pub region: Region,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
}

/// Bias point with the free terminals replaced by `x`.
fn apply(base: &BiasPoint, free: &[Terminal], x: &[f64]) -> BiasPoint {
    let mut b = *base;
    for (t, v) in free.iter().zip(x) {
        b.set(*t, TerminalBias::Fixed(*v));
    }
    b
}

/// Locates a bias point of minimal FSS by multi-start Nelder–Mead over the
/// free terminals. Restart points are the best cells of a coarse grid over
/// the search box; the given start is always tried first.
pub fn find_zero_fss(
    start: &BiasPoint,
    free: &[Terminal],
    model: &DeviceModel,
    exciton: &ExcitonParams,
    cfg: &SolverConfig,
    opts: &TuneOptions,
) -> Result<TuneResult> {
    opts.validate()?;
    exciton.validate()?;
    if free.is_empty() {
        return Err(Error::Input("at least one terminal must be free".into()));
    }
    let mut uniq = free.to_vec();
    uniq.sort();
    uniq.dedup();
    if uniq.len() != free.len() {
        return Err(Error::Input("free terminals must be distinct".into()));
    }
    let bounds: Vec<(f64, f64)> = free.iter().map(|t| opts.bounds[t.index()]).collect();
    // A free terminal that starts floating begins at the box center.
    let x_start: Vec<f64> = free
        .iter()
        .zip(&bounds)
        .map(|(t, (lo, hi))| {
            start
                .get(*t)
                .voltage()
                .unwrap_or(0.5 * (lo + hi))
                .clamp(*lo, *hi)
        })
        .collect();
    let base = apply(start, free, &x_start);
    base.validate()?;

    // Sequential objective; each solve warm-starts from the previous one.
    let warm: RefCell<Option<FieldSolution>> = RefCell::new(None);
    let evals = RefCell::new(0usize);
    let solve = |x: &[f64]| -> Option<FieldSolution> {
        *evals.borrow_mut() += 1;
        let bias = apply(&base, free, x);
        let prev = warm.borrow().clone();
        match model.solve(&bias, prev.as_ref(), cfg) {
            Ok(s) => {
                *warm.borrow_mut() = Some(s.clone());
                Some(s)
            }
            Err(_) => model.solve(&bias, None, cfg).ok(),
        }
    };
    let objective = |x: &[f64]| -> f64 {
        solve(x)
            .map(|s| exciton_state(exciton, s.e_vector()).fss)
            .unwrap_or(f64::INFINITY)
    };

    // Coarse restart grid.
    let n = free.len();
    let k = opts.coarse_points;
    let mut coarse: Vec<(Vec<f64>, f64)> = Vec::new();
    for flat in 0..k.pow(n as u32) {
        let mut rem = flat;
        let x: Vec<f64> = bounds
            .iter()
            .map(|(lo, hi)| {
                let idx = rem % k;
                rem /= k;
                if k == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * idx as f64 / (k - 1) as f64
                }
            })
            .collect();
        let f = objective(&x);
        coarse.push((x, f));
    }
    coarse.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut starts = vec![x_start.clone()];
    starts.extend(coarse.iter().take(opts.restarts).map(|c| c.0.clone()));

    let side = bounds
        .iter()
        .map(|(lo, hi)| hi - lo)
        .fold(f64::INFINITY, f64::min);
    let simplex = SimplexOptions {
        initial_step: opts.initial_step_fraction * side,
        x_tol: opts.x_tol,
        f_target: 1e-3 * opts.tol,
        max_evals: opts.max_evals,
    };

    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut runs = 0;
    for x0 in &starts {
        runs += 1;
        let out = nelder_mead(objective, x0, &bounds, &simplex);
        iterations += out.iterations;
        if best.as_ref().map_or(true, |b| out.f < b.1) {
            best = Some((out.x, out.f, x0.clone()));
        }
        if best.as_ref().is_some_and(|b| b.1 <= simplex.f_target) {
            break;
        }
    }
    let (x_best, _, x_from) = best.expect("at least one simplex run");

    let bias = apply(&base, free, &x_best);
    let sol = model.solve(&bias, None, cfg)?;
    let state = exciton_state(exciton, sol.e_vector());

    // Probe the eigenaxes on both sides of the optimum along the approach.
    let mut dir: Vec<f64> = x_best.iter().zip(&x_from).map(|(a, b)| a - b).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > 1e-9 {
        dir.iter_mut().for_each(|d| *d /= norm);
    } else {
        dir = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    }
    let probe = |sign: f64| -> Vec<f64> {
        x_best
            .iter()
            .zip(&dir)
            .map(|(x, d)| x + sign * opts.probe_step * d)
            .collect()
    };
    let rotation = eigenaxis_rotation_check(
        &apply(&base, free, &probe(-1.0)),
        &apply(&base, free, &probe(1.0)),
        model,
        exciton,
        cfg,
    );

    let evaluations = *evals.borrow();
    Ok(TuneResult {
        bias,
        free_terminals: free.to_vec(),
        fss: state.fss,
        tol: opts.tol,
        converged: state.fss <= opts.tol,
        theta0: state.theta0,
        rotation,
        mean_energy: state.mean_energy,
        field: sol.e_vector(),
        currents: sol.terminal_current,
        region: classify_regime(&sol, cfg.regime_threshold),
        iterations,
        evaluations,
        restarts: runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoPair {
    /// Record indices in the sweep.
    pub first: usize,
    pub second: usize,
    pub bias_first: BiasPoint,
    pub bias_second: BiasPoint,
    /// µeV.
    pub fss_first: f64,
    pub fss_second: f64,
    /// Mean-energy difference `second − first`, µeV.
    pub energy_separation: f64,
}

/// A converged grid cell considered by [`iso_fss_pairs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoCandidate {
    pub index: usize,
    pub bias: BiasPoint,
    /// µeV.
    pub fss: f64,
    /// eV.
    pub mean_energy: f64,
}

/// Pairs of candidates whose FSS is within 10 % of `target` and whose mean
/// energies differ by at least `min_separation` (both µeV), in ascending
/// `(first, second)` order of the candidate list.
pub fn iso_fss_pairs(
    candidates: &[IsoCandidate],
    target: f64,
    min_separation: f64,
) -> Vec<IsoPair> {
    let hits: Vec<&IsoCandidate> = candidates
        .iter()
        .filter(|c| (c.fss - target).abs() <= 0.1 * target.abs())
        .collect();
    let mut pairs = Vec::new();
    for (a, ca) in hits.iter().enumerate() {
        for cb in &hits[a + 1..] {
            let sep = (cb.mean_energy - ca.mean_energy) * 1e6;
            if sep.abs() >= min_separation {
                pairs.push(IsoPair {
                    first: ca.index,
                    second: cb.index,
                    bias_first: ca.bias,
                    bias_second: cb.bias,
                    fss_first: ca.fss,
                    fss_second: cb.fss,
                    energy_separation: sep,
                });
            }
        }
    }
    pairs
}

/// [`iso_fss_pairs`] over the converged cells of a sweep.
pub fn iso_fss_points(sweep: &SweepResult, target: f64, min_separation: f64) -> Vec<IsoPair> {
    let candidates: Vec<IsoCandidate> = sweep
        .ok_values()
        .map(|(r, v)| IsoCandidate {
            index: r.index,
            bias: r.bias,
            fss: v.fss,
            mean_energy: v.mean_energy,
        })
        .collect();
    iso_fss_pairs(&candidates, target, min_separation)
}
