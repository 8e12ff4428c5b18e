//! Bright-exciton doublet as a function of the local electric field.
//!
//! The fine-structure splitting is the norm of a two-component vector
//! `δ = δ0 + M·(E_x, E_y) + γ_z·E_z` (µeV). In the linear-polarization basis
//! the exchange Hamiltonian is `H = ½[[δx, δy], [δy, −δx]]`, whose high-energy
//! eigenvector makes the angle `θ0 = ½·atan2(δy, δx)` with the x axis.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this splitting (µeV) the eigenaxes are not defined.
pub const AXIS_TOLERANCE: f64 = 0.01;

/// `|det M|` below which `M` is flagged singular, in (µeV per V/m)².
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitonParams {
    /// Zero-field mean transition energy, eV.
    pub e0: f64,
    /// Zero-field FSS vector, µeV.
    pub delta0: [f64; 2],
    /// In-plane coupling, µeV per V/m; row `i` maps `(E_x, E_y)` to `δ_i`.
    pub m: [[f64; 2]; 2],
    /// Vertical-field coupling of the FSS vector, µeV per V/m.
    pub gamma_z: [f64; 2],
    /// Permanent dipole term, µeV per V/m.
    pub p_z: f64,
    /// Polarizability, µeV per (V/m)².
    pub beta_z: f64,
}

impl ExcitonParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e0,
            self.delta0[0],
            self.delta0[1],
            self.m[0][0],
            self.m[0][1],
            self.m[1][0],
            self.m[1][1],
            self.gamma_z[0],
            self.gamma_z[1],
            self.p_z,
            self.beta_z,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("exciton parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn det_m(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Whether the in-plane coupling can steer the FSS vector in every
    /// direction (two independent, non-parallel controls).
    pub fn m_invertible(&self) -> bool {
        self.det_m().abs() > SINGULAR_DET
    }
}

/// Doublet state at one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitonState {
    /// Splitting `E_high − E_low`, µeV.
    pub fss: f64,
    /// Polarization angle of the high-energy line in `[0, π)`; `None` when
    /// `fss <= AXIS_TOLERANCE`.
    pub theta0: Option<f64>,
    /// eV.
    pub mean_energy: f64,
    /// eV.
    pub e_high: f64,
    /// eV.
    pub e_low: f64,
}

impl ExcitonState {
    pub fn is_degenerate(&self) -> bool {
        self.theta0.is_none()
    }

    /// Signed splitting projected on fixed axes `(θ_ref, θ_ref + π/2)`:
    /// the peak energy along `θ_ref` minus that along `θ_ref + π/2`, µeV.
    pub fn algebraic_fss(&self, theta_ref: f64) -> f64 {
        match self.theta0 {
            Some(t) => self.fss * (2.0 * (theta_ref - t)).cos(),
            None => 0.0,
        }
    }
}

/// FSS vector (µeV) at field `(E_x, E_y, E_z)` in V/m.
pub fn fss_vector(params: &ExcitonParams, field: [f64; 3]) -> [f64; 2] {
    let [ex, ey, ez] = field;
    let m = &params.m;
    [
        params.delta0[0] + m[0][0] * ex + m[0][1] * ey + params.gamma_z[0] * ez,
        params.delta0[1] + m[1][0] * ex + m[1][1] * ey + params.gamma_z[1] * ez,
    ]
}

/// Mean-energy shift relative to `E0`, µeV.
pub fn stark_shift(params: &ExcitonParams, e_z: f64) -> f64 {
    -params.p_z * e_z - params.beta_z * e_z * e_z
}

/// High-energy eigenaxis of `δ` mapped to `[0, π)`.
pub fn eigenaxis(delta: [f64; 2]) -> f64 {
    let t = 0.5 * delta[1].atan2(delta[0]);
    let t = t.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs.
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Doublet from an FSS vector and a vertical field.
pub fn state_from_vector(params: &ExcitonParams, delta: [f64; 2], e_z: f64) -> ExcitonState {
    let fss = delta[0].hypot(delta[1]);
    let mean = params.e0 + stark_shift(params, e_z) * 1e-6;
    ExcitonState {
        fss,
        theta0: (fss > AXIS_TOLERANCE).then(|| eigenaxis(delta)),
        mean_energy: mean,
        e_high: mean + 0.5e-6 * fss,
        e_low: mean - 0.5e-6 * fss,
    }
}

pub fn exciton_state(params: &ExcitonParams, field: [f64; 3]) -> ExcitonState {
    state_from_vector(params, fss_vector(params, field), field[2])
}

/// Eigenaxis rotation `|θb − θa|` folded to `[0, π/2]`.
pub fn axis_rotation(theta_a: f64, theta_b: f64) -> f64 {
    let d = (theta_b - theta_a).rem_euclid(PI);
    d.min(PI - d)
}
