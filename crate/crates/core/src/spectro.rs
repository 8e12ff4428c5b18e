//! Polarization-resolved photoluminescence of an unresolved doublet.
//!
//! Behind a rotating analyzer the two lines of the doublet are weighted by
//! Malus' law, so the apparent peak moves sinusoidally with period π in the
//! detection angle. [`fit_fss_sine`] recovers `Δ_FSS` and `θ0` from that shift
//! using the law `offset + Δ·(cos[2(θ−θ0)] + 1)/2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exciton::{exciton_state, ExcitonParams, ExcitonState};

/// Smallest scan the fit accepts.
pub const MIN_SCAN_POINTS: usize = 6;

/// Peak energy versus detection angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationScan {
    /// Detection polarization angles, rad.
    pub angles: Vec<f64>,
    /// Apparent peak energies, µeV relative to a reference.
    pub peak_energies: Vec<f64>,
    /// Per-point noise, µeV. Zero means "unknown"; the fit is then unweighted.
    pub sigma: Vec<f64>,
}

impl PolarizationScan {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Checks lengths, finiteness and that the angles cover the π period
    /// without a hole wider than π/2 (otherwise cos 2θ and sin 2θ cannot be
    /// separated).
    pub fn validate(&self) -> Result<()> {
        let n = self.angles.len();
        if self.peak_energies.len() != n || self.sigma.len() != n {
            return Err(Error::Input(format!(
                "scan columns differ in length: {} angles, {} energies, {} sigmas",
                n,
                self.peak_energies.len(),
                self.sigma.len()
            )));
        }
        if n < MIN_SCAN_POINTS {
            return Err(Error::Input(format!(
                "scan has {n} points, at least {MIN_SCAN_POINTS} are required"
            )));
        }
        for i in 0..n {
            if !self.angles[i].is_finite() || !self.peak_energies[i].is_finite() {
                return Err(Error::Input(format!("scan point {i} is not finite")));
            }
            if !(self.sigma[i] >= 0.0) || !self.sigma[i].is_finite() {
                return Err(Error::Input(format!("scan point {i} has invalid sigma")));
            }
        }
        let gap = largest_gap_mod_pi(&self.angles);
        if gap > PI / 2.0 + 1e-12 {
            return Err(Error::Input(format!(
                "scan angles leave a {gap:.3} rad hole in the π period (max π/2)"
            )));
        }
        Ok(())
    }
}

fn largest_gap_mod_pi(angles: &[f64]) -> f64 {
    let mut folded: Vec<f64> = angles.iter().map(|a| a.rem_euclid(PI)).collect();
    folded.sort_by(f64::total_cmp);
    let mut gap = folded[0] + PI - folded[folded.len() - 1];
    for w in folded.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap
}

/// Two equal-width Lorentzians with Malus-law weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    /// µeV.
    pub e_high: f64,
    /// µeV.
    pub e_low: f64,
    /// FWHM, µeV.
    pub linewidth: f64,
    /// Polarization of the high-energy line, rad.
    pub theta0: f64,
}

impl SpectrumModel {
    /// Line positions relative to `reference_ev`, taken from an exciton state.
    /// A degenerate state gets `θ0 = 0`, which is immaterial at zero splitting.
    pub fn from_state(state: &ExcitonState, reference_ev: f64, linewidth: f64) -> Self {
        SpectrumModel {
            e_high: (state.e_high - reference_ev) * 1e6,
            e_low: (state.e_low - reference_ev) * 1e6,
            linewidth,
            theta0: state.theta0.unwrap_or(0.0),
        }
    }

    /// Malus weights `(cos², sin²)` of the high and low lines.
    pub fn amplitudes(&self, theta: f64) -> (f64, f64) {
        let c = (theta - self.theta0).cos();
        let w_high = c * c;
        (w_high, 1.0 - w_high)
    }

    /// Spectrum intensity at energy `e` (µeV) behind an analyzer at `theta`.
    pub fn intensity(&self, e: f64, theta: f64) -> f64 {
        let (wh, wl) = self.amplitudes(theta);
        let half = 0.5 * self.linewidth;
        let lor = |x: f64| 1.0 / (1.0 + (x / half).powi(2));
        wh * lor(e - self.e_high) + wl * lor(e - self.e_low)
    }
}

/// Energy of the global maximum of the weighted doublet, µeV.
pub fn peak_centroid(model: &SpectrumModel, theta: f64) -> f64 {
    let (wh, wl) = model.amplitudes(theta);
    if wl == 0.0 {
        return model.e_high;
    }
    if wh == 0.0 {
        return model.e_low;
    }
    let (lo, hi) = if model.e_low <= model.e_high {
        (model.e_low, model.e_high)
    } else {
        (model.e_high, model.e_low)
    };
    if hi - lo == 0.0 {
        return lo;
    }
    // The maximum of a sum of two unimodal peaks lies between them; a coarse
    // scan picks the right basin when the sum is bimodal, golden section
    // then polishes inside it.
    const COARSE: usize = 400;
    let f = |e: f64| model.intensity(e, theta);
    let step = (hi - lo) / COARSE as f64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..=COARSE {
        let v = f(lo + step * k as f64);
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= 1e-13 * (1.0 + hi.abs().max(lo.abs())) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    // The endpoints are candidates too when a weight is tiny.
    [x, lo, hi]
        .into_iter()
        .max_by(|p, q| f(*p).total_cmp(&f(*q)))
        .unwrap_or(x)
}

/// Detection angle selected by a half-wave plate at `theta_hwp` in front of
/// a fixed polarizer.
pub fn hwp_to_detection_angle(theta_hwp: f64) -> f64 {
    let t = (2.0 * theta_hwp).rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Synthetic scan at `n_angles` detection angles uniform on `[0, π)`.
/// Energies are relative to the zero-field mean energy `E0`.
pub fn synth_polarization_scan(
    params: &ExcitonParams,
    field: [f64; 3],
    linewidth: f64,
    noise_sigma: f64,
    n_angles: usize,
    seed: u64,
) -> Result<PolarizationScan> {
    let state = exciton_state(params, field);
    let model = SpectrumModel::from_state(&state, params.e0, linewidth);
    synth_scan_from_model(&model, noise_sigma, n_angles, seed)
}

pub fn synth_scan_from_model(
    model: &SpectrumModel,
    noise_sigma: f64,
    n_angles: usize,
    seed: u64,
) -> Result<PolarizationScan> {
    if n_angles < MIN_SCAN_POINTS {
        return Err(Error::Input(format!(
            "n_angles = {n_angles}, at least {MIN_SCAN_POINTS} are required"
        )));
    }
    if !(model.linewidth > 0.0) {
        return Err(Error::Input("linewidth must be positive".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::Input(
            "noise sigma must be finite and non-negative".into(),
        ));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Input(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..n_angles)
        .map(|k| PI * k as f64 / n_angles as f64)
        .collect();
    let peak_energies = angles
        .iter()
        .map(|&t| {
            let e = peak_centroid(model, t);
            if noise_sigma > 0.0 {
                e + noise.sample(&mut rng)
            } else {
                e
            }
        })
        .collect();
    Ok(PolarizationScan {
        angles,
        peak_energies,
        sigma: vec![noise_sigma; n_angles],
    })
}

/// Result of fitting `offset + Δ·(cos[2(θ−θ0)] + 1)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// µeV, ≥ 0.
    pub delta_fss: f64,
    /// rad in `[0, π)`.
    pub theta0: f64,
    /// Low-line energy, µeV.
    pub offset: f64,
    /// µeV.
    pub residual_rms: f64,
    /// Covariance of `(Δ, θ0, offset)`.
    pub covariance: [[f64; 3]; 3],
    /// 1σ of `(Δ, θ0, offset)`.
    pub uncertainties: [f64; 3],
    pub iterations: usize,
    pub n_points: usize,
}

impl FitResult {
    pub fn model(&self, theta: f64) -> f64 {
        shift_law(self.delta_fss, self.theta0, self.offset, theta)
    }

    /// Signed splitting on the fixed axes `(θ_ref, θ_ref + π/2)`: fitted peak
    /// energy along `θ_ref` minus that along `θ_ref + π/2`.
    pub fn algebraic_fss(&self, theta_ref: f64) -> f64 {
        self.model(theta_ref) - self.model(theta_ref + PI / 2.0)
    }
}

pub fn shift_law(delta: f64, theta0: f64, offset: f64, theta: f64) -> f64 {
    offset + delta * ((2.0 * (theta - theta0)).cos() + 1.0) / 2.0
}

/// Solves the 3×3 symmetric system `a x = b` by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn invert3(a: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let x = solve3(a, e)?;
        for r in 0..3 {
            inv[r][c] = x[r];
        }
    }
    // Symmetrize round-off.
    for r in 0..3 {
        for c in r + 1..3 {
            let m = 0.5 * (inv[r][c] + inv[c][r]);
            inv[r][c] = m;
            inv[c][r] = m;
        }
    }
    Some(inv)
}

/// Weighted least squares for the shift law.
///
/// Initialization takes the frequency-2 harmonic of the angle series (a
/// linear least-squares fit of `c + a cos 2θ + b sin 2θ`), then
/// Levenberg–Marquardt refines `(Δ, θ0, offset)`. The covariance is
/// `(JᵀWJ)⁻¹` scaled by the reduced χ², i.e. by the residual RMS.
pub fn fit_fss_sine(scan: &PolarizationScan) -> Result<FitResult> {
    scan.validate()?;
    let n = scan.len();
    let weighted = scan.sigma.iter().all(|&s| s > 0.0);
    let w: Vec<f64> = if weighted {
        scan.sigma.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; n]
    };

    // Harmonic initialization.
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for i in 0..n {
        let t = 2.0 * scan.angles[i];
        let row = [1.0, t.cos(), t.sin()];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += w[i] * row[r] * row[c];
            }
            atb[r] += w[i] * row[r] * scan.peak_energies[i];
        }
    }
    let [c0, a, b] =
        solve3(ata, atb).ok_or_else(|| Error::Fit("harmonic initialization is singular".into()))?;
    let mut p = [2.0 * a.hypot(b), 0.5 * b.atan2(a), 0.0];
    p[2] = c0 - 0.5 * p[0];

    let chi2 = |p: &[f64; 3]| -> f64 {
        (0..n)
            .map(|i| {
                let r = scan.peak_energies[i] - shift_law(p[0], p[1], p[2], scan.angles[i]);
                w[i] * r * r
            })
            .sum()
    };
    let normal_eqs = |p: &[f64; 3]| -> ([[f64; 3]; 3], [f64; 3]) {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..n {
            let arg = 2.0 * (scan.angles[i] - p[1]);
            let jrow = [0.5 * (arg.cos() + 1.0), p[0] * arg.sin(), 1.0];
            let r = scan.peak_energies[i] - shift_law(p[0], p[1], p[2], scan.angles[i]);
            for rr in 0..3 {
                for cc in 0..3 {
                    jtj[rr][cc] += w[i] * jrow[rr] * jrow[cc];
                }
                jtr[rr] += w[i] * jrow[rr] * r;
            }
        }
        (jtj, jtr)
    };

    let data_scale = scan
        .peak_energies
        .iter()
        .fold(0.0f64, |m, e| m.max(e.abs()))
        .max(1.0);
    let mut lambda = 1e-3;
    let mut cost = chi2(&p);
    let mut iterations = 0;
    let mut converged = false;
    const MAX_ITERS: usize = 200;
    while iterations < MAX_ITERS {
        iterations += 1;
        let (jtj, jtr) = normal_eqs(&p);
        let grad = jtr.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad <= 1e-14 * data_scale * w.iter().sum::<f64>() || cost == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[k][k] += lambda * jtj[k][k].max(1e-30);
            }
            let Some(step) = solve3(damped, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let trial_cost = chi2(&trial);
            if trial_cost <= cost {
                let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                let small_step = step[0].abs() <= 1e-13 * (1.0 + p[0].abs())
                    && step[1].abs() <= 1e-13
                    && step[2].abs() <= 1e-13 * (1.0 + p[2].abs());
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-15 || small_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left: the harmonic start was already the
            // optimum to machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "Levenberg–Marquardt did not converge in {MAX_ITERS} iterations"
        )));
    }

    // Report Δ ≥ 0: a negative amplitude is the same curve with the axes
    // exchanged and the offset moved to the other line.
    if p[0] < 0.0 {
        p[2] += p[0];
        p[0] = -p[0];
        p[1] += PI / 2.0;
    }
    p[1] = p[1].rem_euclid(PI);
    if p[1] >= PI {
        p[1] = 0.0;
    }

    let (jtj, _) = normal_eqs(&p);
    let dof = n.saturating_sub(3).max(1) as f64;
    let reduced = chi2(&p) / dof;
    let covariance = match invert3(jtj) {
        Some(inv) => inv.map(|row| row.map(|v| v * reduced)),
        None => {
            // Δ = 0 makes θ0 unidentifiable.
            let mut c = [[0.0; 3]; 3];
            c[1][1] = f64::INFINITY;
            c
        }
    };
    let uncertainties = [0, 1, 2].map(|k| covariance[k][k].max(0.0).sqrt());
    let residual_rms = ((0..n)
        .map(|i| (scan.peak_energies[i] - shift_law(p[0], p[1], p[2], scan.angles[i])).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(FitResult {
        delta_fss: p[0],
        theta0: p[1],
        offset: p[2],
        residual_rms,
        covariance,
        uncertainties,
        iterations,
        n_points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(delta: f64, theta0: f64, lw: f64) -> SpectrumModel {
        SpectrumModel {
            e_high: 0.5 * delta,
            e_low: -0.5 * delta,
            linewidth: lw,
            theta0,
        }
    }

    #[test]
    fn centroid_at_the_axes() {
        let m = model(10.0, 0.4, 100.0);
        assert_eq!(peak_centroid(&m, 0.4), 5.0);
        assert!((peak_centroid(&m, 0.4 + PI / 2.0) + 5.0).abs() < 1e-9);
    }

    #[test]
    fn centroid_matches_dense_grid() {
        let m = model(10.0, 0.3, 100.0);
        let t = 0.3 + PI / 4.0;
        let c = peak_centroid(&m, t);
        let best = (0..=200_000)
            .map(|k| -5.0 + 10.0 * k as f64 / 200_000.0)
            .max_by(|a, b| m.intensity(*a, t).total_cmp(&m.intensity(*b, t)))
            .unwrap();
        assert!((c - best).abs() < 1e-4);
        assert!(c.abs() < 0.2);
    }

    #[test]
    fn centroid_resolved_doublet_picks_stronger_line() {
        let m = model(100.0, 0.0, 10.0);
        let c = peak_centroid(&m, 0.3);
        assert!((c - 50.0).abs() < 1.0, "{c}");
    }

    #[test]
    fn hwp_doubling() {
        assert_eq!(hwp_to_detection_angle(0.0), 0.0);
        assert!((hwp_to_detection_angle(PI / 4.0) - PI / 2.0).abs() < 1e-15);
        assert!(hwp_to_detection_angle(PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let angles: Vec<f64> = (0..36).map(|k| PI * k as f64 / 36.0).collect();
        let e: Vec<f64> = angles
            .iter()
            .map(|&t| shift_law(10.0, PI / 6.0, -3.0, t))
            .collect();
        let scan = PolarizationScan {
            sigma: vec![0.0; 36],
            angles,
            peak_energies: e,
        };
        let f = fit_fss_sine(&scan).unwrap();
        assert!((f.delta_fss - 10.0).abs() < 1e-8);
        assert!((f.theta0 - PI / 6.0).abs() < 1e-8);
        assert!((f.offset + 3.0).abs() < 1e-8);
    }

    #[test]
    fn too_few_points() {
        let scan = PolarizationScan {
            angles: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            peak_energies: vec![0.0; 5],
            sigma: vec![0.1; 5],
        };
        assert!(matches!(fit_fss_sine(&scan), Err(Error::Input(_))));
    }

    #[test]
    fn narrow_angle_coverage_rejected() {
        let scan = PolarizationScan {
            angles: (0..8).map(|k| 0.1 * k as f64).collect(),
            peak_energies: vec![0.0; 8],
            sigma: vec![0.1; 8],
        };
        assert!(matches!(scan.validate(), Err(Error::Input(_))));
    }

    #[test]
    fn seeded_synthesis_repeats() {
        let m = model(10.0, 0.2, 100.0);
        let a = synth_scan_from_model(&m, 0.5, 24, 7).unwrap();
        let b = synth_scan_from_model(&m, 0.5, 24, 7).unwrap();
        let c = synth_scan_from_model(&m, 0.5, 24, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
