use serde::{Deserialize, Serialize};

use super::geometry::Terminal;
use crate::error::{Error, Result};

/// Boltzmann constant over elementary charge, V/K.
pub const K_B_OVER_Q: f64 = 8.617_333_262e-5;

/// Lumped electrical parameters of the p-sheet, the vertical junction and
/// the per-ridge series resistances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Sheet conductance of the p layer, S per square.
    pub sheet_conductance: f64,
    /// Junction saturation current density, A/µm².
    pub saturation_current_density: f64,
    pub ideality: f64,
    /// kT/q, V.
    pub thermal_voltage: f64,
    /// Lumped series resistance between each source and its pad, Ω.
    pub series_resistance: [f64; 3],
    /// Multiplier of the sheet conductance inside each ridge (A, B, C);
    /// models a damaged or thinned connector. 1 means uniform sheet.
    #[serde(default = "unit_factors")]
    pub ridge_conductance_factor: [f64; 3],
}

fn unit_factors() -> [f64; 3] {
    [1.0; 3]
}

impl MaterialParams {
    pub fn thermal_voltage_at(temperature_k: f64) -> f64 {
        K_B_OVER_Q * temperature_k
    }

    pub fn series(&self, t: Terminal) -> f64 {
        self.series_resistance[t.index()]
    }

    /// Diode slope voltage `n_id * V_T`.
    pub fn slope_voltage(&self) -> f64 {
        self.ideality * self.thermal_voltage
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sheet_conductance,
            self.saturation_current_density,
            self.ideality,
            self.thermal_voltage,
        ]
        .into_iter()
        .chain(self.series_resistance)
        .chain(self.ridge_conductance_factor);
        for v in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Materials(format!(
                    "all parameters must be finite and > 0 (got {v})"
                )));
            }
        }
        if !(1.0..=2.0).contains(&self.ideality) {
            return Err(Error::Materials(format!(
                "ideality {} outside [1, 2]",
                self.ideality
            )));
        }
        Ok(())
    }
}
