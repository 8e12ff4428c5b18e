//! Recovery of the splitting and eigenaxis from polarization scans.

use pillar_core::exciton::axis_rotation;
use pillar_core::spectro::{
    fit_fss_sine, hwp_to_detection_angle, peak_centroid, shift_law, synth_scan_from_model,
    PolarizationScan, SpectrumModel,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * k as f64 / n as f64).collect()
}

fn sine_scan(delta: f64, theta0: f64, offset: f64, n: usize) -> PolarizationScan {
    let angles = uniform_angles(n);
    let peak_energies = angles
        .iter()
        .map(|&t| shift_law(delta, theta0, offset, t))
        .collect();
    PolarizationScan {
        angles,
        peak_energies,
        sigma: vec![0.0; n],
    }
}

fn noisy_scan(
    delta: f64,
    theta0: f64,
    sigma: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> PolarizationScan {
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut scan = sine_scan(delta, theta0, -3.0, n);
    for e in &mut scan.peak_energies {
        *e += normal.sample(rng);
    }
    scan.sigma = vec![sigma; n];
    scan
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn noiseless_sinusoids_are_recovered_exactly() {
    for delta in [0.5, 1.0, 1.5, 3.0, 7.5, 12.0, 20.0] {
        for k in 0..12 {
            let theta0 = PI * (k as f64 + 0.3) / 12.0;
            let fit = fit_fss_sine(&sine_scan(delta, theta0, 4.2, 36)).unwrap();
            assert!(
                ((fit.delta_fss - delta) / delta).abs() < 1e-6,
                "Δ {delta}, θ0 {theta0}: got {}",
                fit.delta_fss
            );
            assert!(
                axis_rotation(fit.theta0, theta0) < 1e-6 * theta0,
                "Δ {delta}, θ0 {theta0}: got {}",
                fit.theta0
            );
        }
    }
}

#[test]
fn reported_uncertainty_matches_monte_carlo_scatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let (delta, theta0, sigma) = (8.0, 0.7, 0.5);
    let mut deltas = Vec::new();
    let mut thetas = Vec::new();
    let mut reported = Vec::new();
    let mut reported_theta = Vec::new();
    for _ in 0..500 {
        let fit = fit_fss_sine(&noisy_scan(delta, theta0, sigma, 36, &mut rng)).unwrap();
        deltas.push(fit.delta_fss);
        thetas.push(fit.theta0);
        reported.push(fit.uncertainties[0]);
        reported_theta.push(fit.uncertainties[1]);
    }
    let mc = std_dev(&deltas);
    let claimed = reported.iter().sum::<f64>() / reported.len() as f64;
    assert!(
        (mc / claimed - 1.0).abs() < 0.2,
        "MC std {mc} vs reported {claimed}"
    );
    let mc_t = std_dev(&thetas);
    let claimed_t = reported_theta.iter().sum::<f64>() / reported_theta.len() as f64;
    assert!(
        (mc_t / claimed_t - 1.0).abs() < 0.2,
        "MC θ std {mc_t} vs reported {claimed_t}"
    );
}

#[test]
fn near_cancellation_splitting_is_resolved() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fit = fit_fss_sine(&noisy_scan(1.5, 2.0, 0.5, 36, &mut rng)).unwrap();
    assert!((fit.delta_fss - 1.5).abs() < 3.0 * fit.uncertainties[0]);
    assert!(fit.uncertainties[0] < 0.5);
}

#[test]
fn axis_uncertainty_grows_as_the_splitting_closes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mean_sigma_theta = |delta: f64| {
        let s: f64 = (0..50)
            .map(|_| {
                fit_fss_sine(&noisy_scan(delta, 1.0, 0.5, 36, &mut rng))
                    .unwrap()
                    .uncertainties[1]
            })
            .sum();
        s / 50.0
    };
    let wide = mean_sigma_theta(20.0);
    let narrow = mean_sigma_theta(1.5);
    assert!(
        narrow >= 10.0 * wide,
        "σθ {narrow} at 1.5 µeV vs {wide} at 20 µeV"
    );
}

#[test]
fn unresolved_doublet_shift_has_the_full_splitting_as_amplitude() {
    // Linewidth 100 times the splitting: the apparent peak follows the
    // Malus-weighted mean and the fitted amplitude is the splitting.
    let model = SpectrumModel {
        e_high: 0.5,
        e_low: -0.5,
        linewidth: 100.0,
        theta0: 0.4,
    };
    let scan = synth_scan_from_model(&model, 0.0, 36, 1).unwrap();
    let fit = fit_fss_sine(&scan).unwrap();
    assert!((fit.delta_fss - 1.0).abs() < 1e-3, "{}", fit.delta_fss);
    assert!(axis_rotation(fit.theta0, 0.4) < 1e-3);
    assert!((peak_centroid(&model, 0.4) - 0.5).abs() < 1e-9);
    assert!((peak_centroid(&model, 0.4 + PI / 2.0) + 0.5).abs() < 1e-9);
}

#[test]
fn half_wave_plate_halves_the_period() {
    for k in 0..40 {
        let a = 0.1 * k as f64;
        let d = hwp_to_detection_angle(a);
        assert!((0.0..PI).contains(&d));
        assert!(axis_rotation(d, hwp_to_detection_angle(a + PI / 2.0)) < 1e-12);
        assert!(axis_rotation(d, 2.0 * a) < 1e-12);
    }
}

#[test]
fn algebraic_value_flips_on_the_swapped_axis() {
    let fit = fit_fss_sine(&sine_scan(6.0, 0.9, 0.0, 24)).unwrap();
    assert!((fit.algebraic_fss(0.9) - 6.0).abs() < 1e-9);
    assert!((fit.algebraic_fss(0.9 + PI / 2.0) + 6.0).abs() < 1e-9);
}

#[test]
fn malformed_scans_are_rejected() {
    assert!(fit_fss_sine(&sine_scan(5.0, 0.3, 0.0, 5)).is_err());
    let mut scan = sine_scan(5.0, 0.3, 0.0, 12);
    scan.peak_energies[3] = f64::NAN;
    assert!(fit_fss_sine(&scan).is_err());
}
