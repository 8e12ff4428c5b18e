//! Stationary potential of the p-sheet with a distributed vertical diode.
//!
//! Each solve is a damped Newton iteration wrapped in bias continuation: the
//! contact voltages are ramped from a known state (zero bias or a warm-start
//! solution) to the target, and ramp steps that fail are bisected.

mod bias;
mod diode;
mod regime;
mod system;

pub use bias::{BiasPoint, TerminalBias};
pub use diode::{diode_current_density, diode_with_slope, limited_exp, EXP_ARG_LIMIT};
pub use regime::{classify_regime, Region};
pub use system::{assemble_system, AssembledSystem, DeviceModel};

use serde::{Deserialize, Serialize};

use crate::device::Terminal;
use crate::error::{Error, Result};
use crate::sparse::SkylineCholesky;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Convergence threshold on `max|F| / scale`, where `scale` is the
    /// largest per-unknown sum of absolute current contributions.
    pub newton_tol: f64,
    pub max_iters: usize,
    /// Initial step factor of the backtracking line search.
    pub damping: f64,
    /// Ramp steps used when starting from zero bias.
    pub continuation_steps: usize,
    /// Current floor (A) for relative Kirchhoff checks.
    pub current_floor: f64,
    /// Terminal current (A) above which a contact counts as passing.
    pub regime_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            max_iters: 60,
            damping: 1.0,
            continuation_steps: 8,
            current_floor: 1e-9,
            regime_threshold: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::Input("newton_tol must be > 0".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Input("max_iters must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Input("damping must lie in (0, 1]".into()));
        }
        if self.continuation_steps < 1 {
            return Err(Error::Input("continuation_steps must be >= 1".into()));
        }
        if !(self.current_floor > 0.0) || !(self.regime_threshold > 0.0) {
            return Err(Error::Input(
                "current_floor and regime_threshold must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Converged stationary state at one bias point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSolution {
    pub bias: BiasPoint,
    /// Potential of every mesh node, V.
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// Potential of each pad (NaN when the mesh has no such pad).
    pub pad_potential: [f64; 3],
    /// In-plane field at the QD node, V/m.
    pub e_inplane: [f64; 2],
    /// Vertical field at the QD node, V/m.
    pub e_z: f64,
    /// Current delivered by each source into the device, A.
    pub terminal_current: [f64; 3],
    /// Total current through the vertical junction, A.
    pub i_junction: f64,
    pub newton_iters: usize,
    /// Final relative residual.
    pub residual: f64,
}

impl FieldSolution {
    pub fn current(&self, t: Terminal) -> f64 {
        self.terminal_current[t.index()]
    }

    pub fn e_vector(&self) -> [f64; 3] {
        [self.e_inplane[0], self.e_inplane[1], self.e_z]
    }

    pub fn inplane_magnitude(&self) -> f64 {
        self.e_inplane[0].hypot(self.e_inplane[1])
    }

    /// `|ΣI_terminal − I_junction|`.
    pub fn kirchhoff_error(&self) -> f64 {
        (self.terminal_current.iter().sum::<f64>() - self.i_junction).abs()
    }

    /// Kirchhoff error relative to `max(|I_A|, |I_B|, |I_C|, floor)`.
    pub fn kirchhoff_relative(&self, current_floor: f64) -> f64 {
        let scale = self
            .terminal_current
            .iter()
            .fold(current_floor, |m, i| m.max(i.abs()));
        self.kirchhoff_error() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCurrents {
    pub i_a: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub i_junction: f64,
}

pub fn terminal_currents(solution: &FieldSolution) -> TerminalCurrents {
    let [i_a, i_b, i_c] = solution.terminal_current;
    TerminalCurrents {
        i_a,
        i_b,
        i_c,
        i_junction: solution.i_junction,
    }
}

/// Solves one bias point starting from zero bias.
pub fn solve_bias_point(
    model: &DeviceModel,
    bias: &BiasPoint,
    cfg: &SolverConfig,
) -> Result<FieldSolution> {
    model.solve(bias, None, cfg)
}

struct NewtonOutcome {
    iters: usize,
    residual: f64,
}

impl DeviceModel {
    /// Solves `bias`, ramping from `warm` (or zero bias when `None`).
    pub fn solve(
        &self,
        bias: &BiasPoint,
        warm: Option<&FieldSolution>,
        cfg: &SolverConfig,
    ) -> Result<FieldSolution> {
        bias.validate()?;
        cfg.validate()?;
        let target = bias.voltages();
        let (mut phi, start, initial_steps) = match warm {
            Some(w) => {
                let phi = self.nodes_to_dofs(&w.phi)?;
                let from = w.bias.voltages();
                let start = Terminal::ALL.map(|t| {
                    from[t.index()]
                        .unwrap_or_else(|| self.terminal_unknown(t).map(|k| phi[k]).unwrap_or(0.0))
                });
                (phi, start, 1)
            }
            None => (vec![0.0; self.unknowns()], [0.0; 3], cfg.continuation_steps),
        };
        let sources_at = |s: f64| -> [Option<f64>; 3] {
            Terminal::ALL
                .map(|t| target[t.index()].map(|v| start[t.index()] + s * (v - start[t.index()])))
        };

        let mut jac = self.pattern.clone();
        let mut total_iters = 0;
        let mut s = 0.0;
        let mut ds = 1.0 / initial_steps as f64;
        let mut last: Option<NewtonOutcome> = None;
        let mut last_err: Option<Error> = None;
        // Solving at s = 0 first pins floating pads for warm starts whose
        // drive pattern differs from the target.
        let mut pending_zero = warm.is_some();
        while s < 1.0 || pending_zero {
            let s_next = if pending_zero { s } else { (s + ds).min(1.0) };
            let mut trial = phi.clone();
            match self.newton(&sources_at(s_next), &mut trial, cfg, &mut jac) {
                Ok(out) => {
                    total_iters += out.iters;
                    phi = trial;
                    if pending_zero {
                        pending_zero = false;
                    } else {
                        s = s_next;
                        ds = (2.0 * ds).min(1.0);
                    }
                    last = Some(out);
                }
                Err(e) => {
                    if let Error::Convergence { iterations, .. } = &e {
                        total_iters += iterations;
                    }
                    ds *= 0.5;
                    let floor = 1.0 / 4096.0;
                    if ds < floor || pending_zero {
                        return Err(match e {
                            Error::Convergence {
                                last_residual,
                                history,
                                ..
                            } => Error::Convergence {
                                iterations: total_iters,
                                last_residual,
                                history,
                            },
                            other => other,
                        });
                    }
                    last_err = Some(e);
                }
            }
        }
        let _ = last_err;
        let out = last.expect("at least one Newton solve");
        Ok(self.finish(bias, &phi, total_iters, out.residual))
    }

    fn finish(&self, bias: &BiasPoint, phi: &[f64], iters: usize, residual: f64) -> FieldSolution {
        let sources = bias.voltages();
        let m = self.materials();
        let (f, _) = self.residual(&sources, phi);
        let mut terminal_current = [0.0; 3];
        let mut pad_potential = [f64::NAN; 3];
        for t in Terminal::ALL {
            if let Some(k) = self.terminal_unknown(t) {
                pad_potential[t.index()] = phi[k];
                terminal_current[t.index()] = match sources[t.index()] {
                    Some(v) => (v - phi[k]) / m.series(t),
                    // Imbalance the floating pad would need to be fed with.
                    None => f[k],
                };
            }
        }
        let i_junction = phi
            .iter()
            .zip(&self.disc.area)
            .map(|(&p, &a)| a * diode_current_density(p, m))
            .sum();
        let grad = self.qd_gradient(phi);
        let phi_nodes = self.dofs_to_nodes(phi);
        let phi_qd = phi_nodes[self.mesh().qd_node()];
        let g = self.geometry();
        FieldSolution {
            bias: *bias,
            phi: phi_nodes,
            pad_potential,
            e_inplane: [-grad[0] * 1e6, -grad[1] * 1e6],
            e_z: (g.built_in_voltage - phi_qd) / g.intrinsic_thickness_m(),
            terminal_current,
            i_junction,
            newton_iters: iters,
            residual,
        }
    }

    /// Damped Newton iteration at fixed sources. On success `phi` holds the
    /// converged potential; the residual 2-norm strictly decreases across
    /// every accepted step.
    fn newton(
        &self,
        sources: &[Option<f64>; 3],
        phi: &mut [f64],
        cfg: &SolverConfig,
        jac: &mut SkylineCholesky,
    ) -> Result<NewtonOutcome> {
        let norm2 = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = |f: &[f64], scale: f64| f.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
        let (mut f, mut scale) = self.residual(sources, phi);
        let mut history = vec![rel(&f, scale)];
        let mut delta = vec![0.0; phi.len()];
        let mut trial = phi.to_vec();
        let mut polished = false;
        for it in 0..cfg.max_iters {
            let r = rel(&f, scale);
            if !r.is_finite() {
                return Err(Error::Numerical("non-finite residual".into()));
            }
            if r <= cfg.newton_tol && polished {
                return Ok(NewtonOutcome {
                    iters: it,
                    residual: r,
                });
            }
            self.jacobian(sources, phi, jac);
            jac.factor()?;
            for (d, fi) in delta.iter_mut().zip(&f) {
                *d = -fi;
            }
            jac.solve(&mut delta);
            let n0 = norm2(&f);
            let mut lambda = cfg.damping;
            loop {
                for k in 0..phi.len() {
                    trial[k] = phi[k] + lambda * delta[k];
                }
                let (ft, st) = self.residual(sources, &trial);
                let nt = norm2(&ft);
                if nt < n0 || (r <= cfg.newton_tol && nt <= n0) {
                    phi.copy_from_slice(&trial);
                    f = ft;
                    scale = st;
                    break;
                }
                if r <= cfg.newton_tol {
                    // Already at round-off: keep the converged state.
                    return Ok(NewtonOutcome {
                        iters: it + 1,
                        residual: r,
                    });
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    return Err(Error::Convergence {
                        iterations: it + 1,
                        last_residual: r,
                        history,
                    });
                }
            }
            // One extra full step after reaching the tolerance pushes the
            // residual to round-off, which keeps Kirchhoff sums tight.
            polished = r <= cfg.newton_tol;
            history.push(rel(&f, scale));
        }
        let r = rel(&f, scale);
        if r <= cfg.newton_tol {
            return Ok(NewtonOutcome {
                iters: cfg.max_iters,
                residual: r,
            });
        }
        Err(Error::Convergence {
            iterations: cfg.max_iters,
            last_residual: r,
            history,
        })
    }
}

/// Residual history of the damped Newton loop for a single, un-ramped
/// solve from `phi0` (node potentials). Exposed for diagnostics and tests.
pub fn newton_residual_history(
    model: &DeviceModel,
    bias: &BiasPoint,
    phi0: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    bias.validate()?;
    let sources = bias.voltages();
    let mut phi = model.nodes_to_dofs(phi0)?;
    let mut jac = model.pattern.clone();
    let norm2 = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut history = vec![norm2(&model.residual(&sources, &phi).0)];
    let probe = SolverConfig {
        max_iters: 1,
        ..cfg.clone()
    };
    for _ in 0..cfg.max_iters {
        match model.newton(&sources, &mut phi, &probe, &mut jac) {
            Ok(_) => break,
            Err(Error::Convergence { .. }) => {}
            Err(e) => return Err(e),
        }
        history.push(norm2(&model.residual(&sources, &phi).0));
        if history.len() > 2 && history[history.len() - 1] == history[history.len() - 2] {
            break;
        }
    }
    Ok(history)
}
