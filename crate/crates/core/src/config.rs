//! Run configuration: one TOML file with a section per module.
//!
//! Parsing is strict: unknown keys anywhere are fatal, so a typo in a
//! calibration file cannot silently fall back to a default.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::device::{DeviceGeometry, MaterialParams};
use crate::error::{Error, Result};
use crate::exciton::ExcitonParams;
use crate::solver::{DeviceModel, SolverConfig};
use crate::tuner::{SweepSpec, TuneOptions};

/// The shipped calibration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Target triangle edge length, µm.
    pub edge_length: f64,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { edge_length: 1.0 }
    }
}

/// Material parameters as written in the file: the thermal voltage is given
/// either directly or through a temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    pub sheet_conductance: f64,
    pub saturation_current_density: f64,
    pub ideality: f64,
    /// K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// V.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_voltage: Option<f64>,
    pub series_resistance: [f64; 3],
    #[serde(default = "unit_factors")]
    pub ridge_conductance_factor: [f64; 3],
}

fn unit_factors() -> [f64; 3] {
    [1.0; 3]
}

/// Temperature assumed when neither it nor the thermal voltage is given, K.
pub const DEFAULT_TEMPERATURE: f64 = 300.0;

impl MaterialsSection {
    pub fn params(&self) -> Result<MaterialParams> {
        let vt = match (self.temperature, self.thermal_voltage) {
            (Some(t), None) => MaterialParams::thermal_voltage_at(t),
            (None, Some(v)) => v,
            (None, None) => MaterialParams::thermal_voltage_at(DEFAULT_TEMPERATURE),
            (Some(t), Some(v)) => {
                let kt = MaterialParams::thermal_voltage_at(t);
                if ((v - kt) / kt).abs() > 0.01 {
                    return Err(Error::Materials(format!(
                        "thermal_voltage {v} V disagrees with kT/q = {kt:.5} V at {t} K"
                    )));
                }
                v
            }
        };
        let m = MaterialParams {
            sheet_conductance: self.sheet_conductance,
            saturation_current_density: self.saturation_current_density,
            ideality: self.ideality,
            thermal_voltage: vt,
            series_resistance: self.series_resistance,
            ridge_conductance_factor: self.ridge_conductance_factor,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Defaults for `synth-scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    /// FWHM, µeV.
    pub linewidth: f64,
    /// µeV.
    pub noise_sigma: f64,
    pub n_angles: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            linewidth: 100.0,
            noise_sigma: 0.5,
            n_angles: 36,
        }
    }
}

/// Defaults for `iso-fss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoSection {
    /// µeV.
    pub target_fss: f64,
    /// µeV.
    pub min_energy_separation: f64,
}

impl Default for IsoSection {
    fn default() -> Self {
        IsoSection {
            target_fss: 5.0,
            min_energy_separation: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random draw of the run.
    pub seed: u64,
    pub device: DeviceGeometry,
    #[serde(default)]
    pub mesh: MeshSection,
    pub materials: MaterialsSection,
    pub exciton: ExcitonParams,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub tuner: TuneOptions,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub iso_fss: IsoSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_calibration() -> RunConfig {
        RunConfig::from_toml_str(DEFAULT_CONFIG).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        if !(self.mesh.edge_length > 0.0 && self.mesh.edge_length.is_finite()) {
            return Err(Error::Config(format!(
                "mesh.edge_length must be > 0 (got {})",
                self.mesh.edge_length
            )));
        }
        self.materials.params()?;
        self.exciton.validate()?;
        self.solver.validate()?;
        self.sweep.validate()?;
        self.tuner.validate()?;
        if !(self.scan.linewidth > 0.0) || !(self.scan.noise_sigma >= 0.0) || self.scan.n_angles < 6
        {
            return Err(Error::Config(
                "scan: linewidth must be > 0, noise_sigma ≥ 0, n_angles ≥ 6".into(),
            ));
        }
        if !(self.iso_fss.target_fss > 0.0) || !(self.iso_fss.min_energy_separation >= 0.0) {
            return Err(Error::Config(
                "iso_fss: target_fss must be > 0 and min_energy_separation ≥ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn materials(&self) -> Result<MaterialParams> {
        self.materials.params()
    }

    /// Builds the footprint, mesh and discretization.
    pub fn device_model(&self) -> Result<DeviceModel> {
        DeviceModel::new(&self.device, &self.materials()?, self.mesh.edge_length)
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration, so
    /// formatting and comments do not change it but any value does.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// First 12 hex digits of [`RunConfig::hash`], used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses() {
        let c = RunConfig::default_calibration();
        assert_eq!(c.hash().len(), 64);
        assert_eq!(c.hash(), RunConfig::default_calibration().hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = DEFAULT_CONFIG.replace("[solver]", "[solver]\nnewton_tolerance = 1e-9");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("newton_tolerance"), "{err}");
    }

    #[test]
    fn hash_tracks_values() {
        let a = RunConfig::default_calibration();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn conflicting_thermal_voltage() {
        let mut m = RunConfig::default_calibration().materials;
        m.temperature = Some(300.0);
        m.thermal_voltage = Some(0.030);
        assert!(m.params().is_err());
        m.thermal_voltage = Some(0.02586);
        assert!(m.params().is_ok());
    }
}
