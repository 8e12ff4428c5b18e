use crate::device::MaterialParams;

/// Exponent argument above which the Shockley exponential continues
/// linearly (value and slope continuous at the knee).
pub const EXP_ARG_LIMIT: f64 = 40.0;

/// `exp(x)` for `x <= 40`, `e^40 (1 + x - 40)` above; returns (value, slope).
pub fn limited_exp(x: f64) -> (f64, f64) {
    if x <= EXP_ARG_LIMIT {
        let e = x.exp();
        (e, e)
    } else {
        let e = EXP_ARG_LIMIT.exp();
        (e * (1.0 + x - EXP_ARG_LIMIT), e)
    }
}

/// Vertical junction current density (A/µm²) for a local p-sheet potential
/// `phi` above the grounded substrate.
pub fn diode_current_density(phi: f64, m: &MaterialParams) -> f64 {
    diode_with_slope(phi, m).0
}

/// Current density and its derivative with respect to `phi` (A/µm²/V).
pub fn diode_with_slope(phi: f64, m: &MaterialParams) -> (f64, f64) {
    let vs = m.slope_voltage();
    let x = phi / vs;
    let (e, de) = limited_exp(x);
    let js = m.saturation_current_density;
    // exp_m1 keeps small forward biases accurate; deep reverse saturates
    // at exactly -J_s.
    let em1 = if x <= EXP_ARG_LIMIT {
        x.exp_m1()
    } else {
        e - 1.0
    };
    (js * em1, js * de / vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MaterialParams {
        MaterialParams {
            sheet_conductance: 1e-6,
            saturation_current_density: 1e-18,
            ideality: 1.5,
            thermal_voltage: 0.02585,
            series_resistance: [1e6; 3],
            ridge_conductance_factor: [1.0; 3],
        }
    }

    #[test]
    fn zero_at_equilibrium() {
        assert_eq!(diode_current_density(0.0, &params()), 0.0);
    }

    #[test]
    fn reverse_saturation() {
        let m = params();
        let j = diode_current_density(-10.0 * m.slope_voltage(), &m);
        let rel = (j + m.saturation_current_density).abs() / m.saturation_current_density;
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn linear_continuation_is_c1() {
        let below = limited_exp(EXP_ARG_LIMIT - 1e-9);
        let above = limited_exp(EXP_ARG_LIMIT + 1e-9);
        assert!((below.0 - above.0).abs() / below.0 < 1e-8);
        assert!((below.1 - above.1).abs() / below.1 < 1e-8);
        assert!(limited_exp(1e6).0.is_finite());
    }

    #[test]
    fn monotone() {
        let m = params();
        let mut last = f64::NEG_INFINITY;
        for k in -300..300 {
            let phi = k as f64 * 0.01;
            let j = diode_current_density(phi, &m);
            // Strict where the exponential is resolvable against -1.
            if phi > -1.0 {
                assert!(j > last, "phi={phi}");
            } else {
                assert!(j >= last, "phi={phi}");
            }
            last = j;
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let m = params();
        for phi in [-0.1, 0.0, 0.5, 1.2, 1.7] {
            let h = 1e-7;
            let fd = (diode_current_density(phi + h, &m) - diode_current_density(phi - h, &m))
                / (2.0 * h);
            let (_, d) = diode_with_slope(phi, &m);
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-30), "phi={phi}");
        }
    }
}
