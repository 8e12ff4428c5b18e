//! Lateral footprint of the three-contact pillar device.
//!
//! Coordinates are in µm with the pillar centered at the origin. Each ridge
//! has a local frame: `u` points radially outward along the ridge axis and
//! `v` is `u` rotated by +90°, so `(s, t)` ridge coordinates map to
//! `s * u + t * v` in the plane.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One of the three biased contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terminal {
    A,
    B,
    C,
}

impl Terminal {
    pub const ALL: [Terminal; 3] = [Terminal::A, Terminal::B, Terminal::C];

    pub fn index(self) -> usize {
        match self {
            Terminal::A => 0,
            Terminal::B => 1,
            Terminal::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Terminal> {
        Terminal::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Terminal::A => "A",
            Terminal::B => "B",
            Terminal::C => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    /// µm
    pub pillar_diameter: f64,
    /// µm
    pub ridge_width: f64,
    /// µm, measured from the rim chord to the pad edge.
    pub ridge_length: f64,
    /// Ridge directions for contacts A, B, C in degrees from the x axis.
    pub ridge_angles_deg: [f64; 3],
    /// Side of the square contact pad, µm.
    pub pad_size: f64,
    /// Intrinsic-region thickness, nm.
    pub intrinsic_thickness: f64,
    /// Built-in voltage of the p-i-n junction, V.
    pub built_in_voltage: f64,
    /// Minimum polygon resolution of the pillar rim.
    #[serde(default = "default_rim_segments")]
    pub rim_segments: usize,
}

fn default_rim_segments() -> usize {
    64
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        DeviceGeometry {
            pillar_diameter: 10.0,
            ridge_width: 3.0,
            ridge_length: 50.0,
            ridge_angles_deg: [90.0, 210.0, 330.0],
            pad_size: 20.0,
            intrinsic_thickness: 270.0,
            built_in_voltage: 1.5,
            rim_segments: 64,
        }
    }
}

impl DeviceGeometry {
    pub fn ridge_angles(&self) -> [f64; 3] {
        self.ridge_angles_deg.map(f64::to_radians)
    }

    pub fn pillar_radius(&self) -> f64 {
        0.5 * self.pillar_diameter
    }

    /// Intrinsic thickness in metres.
    pub fn intrinsic_thickness_m(&self) -> f64 {
        self.intrinsic_thickness * 1e-9
    }

    /// Vertical field at zero bias, V/m.
    pub fn equilibrium_field(&self) -> f64 {
        self.built_in_voltage / self.intrinsic_thickness_m()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.pillar_diameter,
            self.ridge_width,
            self.ridge_length,
            self.pad_size,
            self.intrinsic_thickness,
            self.built_in_voltage,
        ]
        .iter()
        .chain(self.ridge_angles_deg.iter())
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Geometry("non-finite parameter".into()));
        }
        if self.pillar_diameter <= 0.0 {
            return Err(Error::Geometry("pillar_diameter must be > 0".into()));
        }
        if self.ridge_width <= 0.0 || self.ridge_width >= self.pillar_diameter {
            return Err(Error::Geometry(
                "ridge_width must lie in (0, pillar_diameter)".into(),
            ));
        }
        if self.ridge_length <= 0.0 {
            return Err(Error::Geometry(
                "degenerate ridge: ridge_length must be > 0".into(),
            ));
        }
        if self.pad_size <= self.ridge_width {
            return Err(Error::Geometry("pad_size must exceed ridge_width".into()));
        }
        if self.intrinsic_thickness <= 0.0 {
            return Err(Error::Geometry("intrinsic_thickness must be > 0".into()));
        }
        if self.built_in_voltage <= 0.0 {
            return Err(Error::Geometry("built_in_voltage must be > 0".into()));
        }
        if self.rim_segments < 8 {
            return Err(Error::Geometry("rim_segments must be >= 8".into()));
        }
        let angles = self.ridge_angles();
        for i in 0..3 {
            for j in (i + 1)..3 {
                if angular_separation(angles[i], angles[j]) < 1e-9 {
                    return Err(Error::Geometry(format!(
                        "ridges {} and {} share the same angle",
                        Terminal::ALL[i].label(),
                        Terminal::ALL[j].label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest absolute angle between two directions, in [0, π].
pub fn angular_separation(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Local frame of one ridge + pad arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmFrame {
    pub angle: f64,
    pub u: [f64; 2],
    pub v: [f64; 2],
    /// Axial position of the rim chord (ridge start).
    pub s_chord: f64,
    /// Axial position of the ridge/pad interface.
    pub s_pad: f64,
    /// Axial position of the far pad edge.
    pub s_end: f64,
    pub half_width: f64,
    pub pad_half: f64,
}

impl ArmFrame {
    pub fn point(&self, s: f64, t: f64) -> [f64; 2] {
        [s * self.u[0] + t * self.v[0], s * self.u[1] + t * self.v[1]]
    }

    pub fn ridge_quad(&self) -> [[f64; 2]; 4] {
        [
            self.point(self.s_chord, -self.half_width),
            self.point(self.s_pad, -self.half_width),
            self.point(self.s_pad, self.half_width),
            self.point(self.s_chord, self.half_width),
        ]
    }

    pub fn pad_quad(&self) -> [[f64; 2]; 4] {
        [
            self.point(self.s_pad, -self.pad_half),
            self.point(self.s_end, -self.pad_half),
            self.point(self.s_end, self.pad_half),
            self.point(self.s_pad, self.pad_half),
        ]
    }
}

/// Validated footprint: pillar disc (as a rim polygon), three ridges, three pads.
#[derive(Debug, Clone)]
pub struct Footprint {
    pub geometry: DeviceGeometry,
    pub arms: [ArmFrame; 3],
    /// Half-angle subtended by a ridge chord at the pillar center.
    pub chord_half_angle: f64,
}

impl Footprint {
    pub fn pillar_radius(&self) -> f64 {
        self.geometry.pillar_radius()
    }

    /// Arm indices sorted counter-clockwise by ridge angle in [0, 2π).
    pub fn arms_ccw(&self) -> [usize; 3] {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| {
            let ta = self.arms[a].angle.rem_euclid(2.0 * PI);
            let tb = self.arms[b].angle.rem_euclid(2.0 * PI);
            ta.total_cmp(&tb)
        });
        idx
    }

    /// Total footprint area in µm² (rim polygon approximated as the disc
    /// minus the three chord segments).
    pub fn area(&self) -> f64 {
        let r = self.pillar_radius();
        let a = self.chord_half_angle;
        let segment = 0.5 * r * r * (2.0 * a - (2.0 * a).sin());
        let g = &self.geometry;
        PI * r * r - 3.0 * segment
            + 3.0 * (g.ridge_width * g.ridge_length + g.pad_size * g.pad_size)
    }
}

/// Builds the footprint polygons from a geometry description.
pub fn build_geometry(config: &DeviceGeometry) -> Result<Footprint> {
    config.validate()?;
    let r = config.pillar_radius();
    let hw = 0.5 * config.ridge_width;
    let chord_half_angle = (hw / r).asin();
    let s_chord = (r * r - hw * hw).sqrt();
    let angles = config.ridge_angles();
    let arms = angles.map(|angle| {
        let (sn, cs) = angle.sin_cos();
        let s_pad = s_chord + config.ridge_length;
        ArmFrame {
            angle,
            u: [cs, sn],
            v: [-sn, cs],
            s_chord,
            s_pad,
            s_end: s_pad + config.pad_size,
            half_width: hw,
            pad_half: 0.5 * config.pad_size,
        }
    });

    // Rim chords must leave a finite arc between neighbouring ridges.
    for i in 0..3 {
        for j in (i + 1)..3 {
            if angular_separation(angles[i], angles[j]) <= 2.0 * chord_half_angle + 1e-9 {
                return Err(Error::Geometry(format!(
                    "ridges {} and {} overlap at the pillar rim",
                    Terminal::ALL[i].label(),
                    Terminal::ALL[j].label()
                )));
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let pad_i = arms[i].pad_quad();
            if i < j && convex_overlap(&pad_i, &arms[j].pad_quad()) {
                return Err(Error::Geometry(format!(
                    "pads {} and {} overlap (ridge angles too close)",
                    Terminal::ALL[i].label(),
                    Terminal::ALL[j].label()
                )));
            }
            if convex_overlap(&pad_i, &arms[j].ridge_quad()) {
                return Err(Error::Geometry(format!(
                    "pad {} overlaps ridge {}",
                    Terminal::ALL[i].label(),
                    Terminal::ALL[j].label()
                )));
            }
        }
    }

    Ok(Footprint {
        geometry: config.clone(),
        arms,
        chord_half_angle,
    })
}

/// Separating-axis test for two convex polygons; touching counts as disjoint.
fn convex_overlap(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    for poly in [a, b] {
        for k in 0..poly.len() {
            let p = poly[k];
            let q = poly[(k + 1) % poly.len()];
            let axis = [-(q[1] - p[1]), q[0] - p[0]];
            let project = |pts: &[[f64; 2]]| {
                pts.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        let d = x[0] * axis[0] + x[1] * axis[1];
                        (lo.min(d), hi.max(d))
                    })
            };
            let (a_lo, a_hi) = project(a);
            let (b_lo, b_hi) = project(b);
            let scale = axis[0].hypot(axis[1]);
            if a_hi <= b_lo + 1e-9 * scale || b_hi <= a_lo + 1e-9 * scale {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_builds() {
        let fp = build_geometry(&DeviceGeometry::default()).unwrap();
        assert_eq!(fp.arms.len(), 3);
        // Ridge sides meet the rim exactly.
        let arm = fp.arms[0];
        let p = arm.point(arm.s_chord, arm.half_width);
        assert!((p[0].hypot(p[1]) - 5.0).abs() < 1e-12);
        assert!(fp.area() > 3.0 * 400.0);
    }

    #[test]
    fn zero_length_ridge_is_rejected() {
        let g = DeviceGeometry {
            ridge_length: 0.0,
            ..DeviceGeometry::default()
        };
        assert!(matches!(build_geometry(&g), Err(Error::Geometry(_))));
    }

    #[test]
    fn equal_angles_are_rejected() {
        let g = DeviceGeometry {
            ridge_angles_deg: [90.0, 90.0, 330.0],
            ..DeviceGeometry::default()
        };
        assert!(matches!(build_geometry(&g), Err(Error::Geometry(_))));
        let g = DeviceGeometry {
            ridge_angles_deg: [90.0, 450.0, 330.0],
            ..DeviceGeometry::default()
        };
        assert!(build_geometry(&g).is_err());
    }

    #[test]
    fn close_ridges_overlap_at_pads() {
        // Rims are still separate but the 60 µm pads collide.
        let g = DeviceGeometry {
            ridge_angles_deg: [90.0, 130.0, 330.0],
            pad_size: 60.0,
            ..DeviceGeometry::default()
        };
        let err = build_geometry(&g).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn ridge_wider_than_pillar_is_rejected() {
        let g = DeviceGeometry {
            ridge_width: 12.0,
            ..DeviceGeometry::default()
        };
        assert!(build_geometry(&g).is_err());
    }

    #[test]
    fn separating_axis() {
        let sq = |x: f64| [[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]];
        assert!(convex_overlap(&sq(0.0), &sq(0.5)));
        assert!(!convex_overlap(&sq(0.0), &sq(1.0)));
        assert!(!convex_overlap(&sq(0.0), &sq(2.0)));
    }
}
