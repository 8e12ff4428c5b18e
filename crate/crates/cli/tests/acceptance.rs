//! Acceptance criteria 1–11 against the shipped calibration.
//!
//! One test drives everything so that the 41×41 sweep is computed once per
//! concurrency level. Each criterion prints a `PASS`/`FAIL` line with the
//! measured quantity; the test fails if any criterion fails.
//!
//! Run with `cargo test -p pillar-cli --test acceptance -- --nocapture` to
//! see the report.

use nalgebra::{Matrix2, SymmetricEigen};
use pillar_core::config::RunConfig;
use pillar_core::device::{DeviceGeometry, MaterialParams, Mesh, Terminal};
use pillar_core::exciton::{axis_rotation, exciton_state, fss_vector, ExcitonParams};
use pillar_core::output::{sweep_from_csv, SweepRow};
use pillar_core::solver::{BiasPoint, DeviceModel, Region, SolverConfig};
use pillar_core::spectro::{fit_fss_sine, shift_law, PolarizationScan};
use pillar_core::tuner::{find_zero_fss, reference_axis, TuneOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_pillar");

struct Report {
    failures: Vec<u32>,
}

impl Report {
    fn check(&mut self, criterion: u32, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {criterion:2} {tag}  {title}: {detail}");
        if !pass {
            self.failures.push(criterion);
        }
    }
}

/// Runs `pillar sweep` and returns the CSV path, its bytes and the wall time.
fn cli_sweep(out: &Path, jobs: usize) -> (PathBuf, Vec<u8>, Duration) {
    let started = Instant::now();
    let status = Command::new(BIN)
        .args(["sweep", "--jobs", &jobs.to_string(), "--out-dir"])
        .arg(out)
        .status()
        .expect("pillar runs");
    let elapsed = started.elapsed();
    assert!(status.success(), "pillar sweep exited with {status}");
    let csv = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .expect("sweep CSV written");
    let bytes = std::fs::read(&csv).unwrap();
    (csv, bytes, elapsed)
}

fn inplane(r: &SweepRow) -> [f64; 2] {
    let f = r.field.expect("field columns present");
    [f[0], f[1]]
}

fn currents(r: &SweepRow) -> [f64; 4] {
    r.currents.expect("current columns present")
}

/// Angular extent of a set of directions: 2π minus the largest empty arc.
fn angular_coverage(mut angles: Vec<f64>) -> f64 {
    if angles.len() < 2 {
        return 0.0;
    }
    angles.iter_mut().for_each(|a| *a = a.rem_euclid(2.0 * PI));
    angles.sort_by(f64::total_cmp);
    let mut gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    for w in angles.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    2.0 * PI - gap
}

fn sine_scan(delta: f64, theta0: f64, n: usize) -> PolarizationScan {
    let angles: Vec<f64> = (0..n).map(|k| PI * k as f64 / n as f64).collect();
    let peak_energies = angles
        .iter()
        .map(|&t| shift_law(delta, theta0, -2.0, t))
        .collect();
    PolarizationScan {
        angles,
        peak_energies,
        sigma: vec![0.0; n],
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn criterion_5_laplace_strip() -> f64 {
    let length = 40.0;
    let mesh = Mesh::rectangle_strip(length, 10.0, 40, 10).unwrap();
    let m = MaterialParams {
        saturation_current_density: 1e-40,
        series_resistance: [1.0; 3],
        ridge_conductance_factor: [1.0; 3],
        ..RunConfig::default_calibration().materials().unwrap()
    };
    let model = DeviceModel::from_mesh(&DeviceGeometry::default(), &m, mesh).unwrap();
    let sol = model
        .solve(
            &BiasPoint::fixed(1.0, 0.0, 0.0),
            None,
            &SolverConfig::default(),
        )
        .unwrap();
    let expected = (sol.pad_potential[0] - sol.pad_potential[1]) / (length * 1e-6);
    let e = sol.e_inplane;
    (e[0] - expected).hypot(e[1]) / expected
}

fn criterion_6_worst_mismatch() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut r = |s: f64| s * (2.0 * rng.random::<f64>() - 1.0);
        let p = ExcitonParams {
            e0: 1.34,
            delta0: [r(30.0), r(30.0)],
            m: [[r(0.2), r(0.2)], [r(0.2), r(0.2)]],
            gamma_z: [r(1e-6), r(1e-6)],
            p_z: r(1e-5),
            beta_z: r(1e-13),
        };
        let field = [r(200.0), r(200.0), 1e7 + r(1e7)];
        let d = fss_vector(&p, field);
        let eig = SymmetricEigen::new(0.5 * Matrix2::new(d[0], d[1], d[1], -d[0]));
        let (hi, lo) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let split = eig.eigenvalues[hi] - eig.eigenvalues[lo];
        let s = exciton_state(&p, field);
        worst = worst.max((s.fss - split).abs() / split.max(1.0));
        if let Some(t) = s.theta0 {
            let v = eig.eigenvectors.column(hi);
            worst = worst.max(axis_rotation(t, v[1].atan2(v[0])));
        }
    }
    worst
}

/// Worst relative error of (Δ, θ0) on noiseless data, and the Monte-Carlo
/// std of Δ̂ over the mean reported 1σ at 0.5 µeV noise and 36 angles.
fn criterion_7() -> (f64, f64) {
    let mut worst: f64 = 0.0;
    for delta in [0.5, 1.5, 5.0, 10.0, 20.0] {
        for k in 0..8 {
            let theta0 = PI * (k as f64 + 0.25) / 8.0;
            let fit = fit_fss_sine(&sine_scan(delta, theta0, 36)).unwrap();
            worst = worst
                .max(((fit.delta_fss - delta) / delta).abs())
                .max(axis_rotation(fit.theta0, theta0) / theta0);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut deltas = Vec::new();
    let mut sigmas = Vec::new();
    for _ in 0..500 {
        let mut scan = sine_scan(8.0, 1.1, 36);
        for e in &mut scan.peak_energies {
            *e += normal.sample(&mut rng);
        }
        scan.sigma = vec![0.5; 36];
        let fit = fit_fss_sine(&scan).unwrap();
        deltas.push(fit.delta_fss);
        sigmas.push(fit.uncertainties[0]);
    }
    let ratio = std_dev(&deltas) / (sigmas.iter().sum::<f64>() / sigmas.len() as f64);
    (worst, ratio)
}

/// Affine-chain cancellation: the FSS found by the tuner on a resistive
/// device with an analytically placed zero, and the distance to that zero.
fn criterion_8_affine() -> (f64, f64) {
    let m = MaterialParams {
        saturation_current_density: 1e-40,
        series_resistance: [1e5; 3],
        ridge_conductance_factor: [1.0; 3],
        ..RunConfig::default_calibration().materials().unwrap()
    };
    let model = DeviceModel::new(&DeviceGeometry::default(), &m, 1.5).unwrap();
    let cfg = SolverConfig::default();
    let e = |va, vb| {
        model
            .solve(&BiasPoint::fixed(va, vb, 0.0), None, &cfg)
            .unwrap()
            .e_inplane
    };
    let (ea, eb) = (e(1.0, 0.0), e(0.0, 1.0));
    let target = [-1.1, 2.4];
    let mm = [[0.12, 0.05], [-0.06, 0.10]];
    let es = [
        ea[0] * target[0] + eb[0] * target[1],
        ea[1] * target[0] + eb[1] * target[1],
    ];
    let exciton = ExcitonParams {
        e0: 1.34,
        delta0: [
            -(mm[0][0] * es[0] + mm[0][1] * es[1]),
            -(mm[1][0] * es[0] + mm[1][1] * es[1]),
        ],
        m: mm,
        gamma_z: [0.0; 2],
        p_z: 0.0,
        beta_z: 0.0,
    };
    let opts = TuneOptions {
        tol: 0.05,
        ..TuneOptions::default()
    };
    let r = find_zero_fss(
        &BiasPoint::fixed(0.0, 0.0, 0.0),
        &[Terminal::A, Terminal::B],
        &model,
        &exciton,
        &cfg,
        &opts,
    )
    .unwrap();
    let va = r.bias.va.voltage().unwrap();
    let vb = r.bias.vb.voltage().unwrap();
    (r.fss, (va - target[0]).hypot(vb - target[1]))
}

#[test]
fn acceptance_criteria() {
    let cfg = RunConfig::default_calibration();
    let threshold = cfg.solver.regime_threshold;
    let mut report = Report {
        failures: Vec::new(),
    };
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();

    // Shared sweep: criteria 1–5, 10 and 11.
    let (csv_path, bytes_1, wall) = cli_sweep(dirs[0].path(), 1);
    let (rows, _) = sweep_from_csv(std::str::from_utf8(&bytes_1).unwrap()).unwrap();
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.ok).collect();
    let in_region = |k: Region| ok.iter().copied().filter(move |r| r.region == Some(k));

    // 1. Regime map.
    {
        let counts: Vec<usize> = Region::ALL.iter().map(|&k| in_region(k).count()).collect();
        let reverse: Vec<&&SweepRow> = ok.iter().filter(|r| r.va < 0.0 && r.vb < 0.0).collect();
        let reverse_r1 = reverse
            .iter()
            .filter(|r| r.region == Some(Region::R1))
            .count();
        let r1_share = reverse_r1 as f64 / reverse.len() as f64;
        let r1: Vec<&SweepRow> = in_region(Region::R1).collect();
        let centroid = (
            r1.iter().map(|r| r.va).sum::<f64>() / r1.len().max(1) as f64,
            r1.iter().map(|r| r.vb).sum::<f64>() / r1.len().max(1) as f64,
        );
        let r2_both = in_region(Region::R2).all(|r| {
            let c = currents(r);
            c[0] >= threshold && c[1] >= threshold
        });
        let pass = rows.len() == 41 * 41
            && counts.iter().all(|&c| c > 0)
            && r1_share >= 0.75
            && centroid.0 < 0.0
            && centroid.1 < 0.0
            && r2_both
            && wall <= Duration::from_secs(300);
        report.check(
            1,
            "regime map",
            pass,
            format!(
                "{}×41 cells, R1/R2/R3/R4 = {:?}, {:.0}% of the reverse quadrant in R1, \
                 R1 centroid ({:.2}, {:.2}) V, R2 both above threshold: {r2_both}, sweep {:.1} s",
                rows.len() / 41,
                counts,
                100.0 * r1_share,
                centroid.0,
                centroid.1,
                wall.as_secs_f64()
            ),
        );
    }

    // 2. Region-1 direction normal to ridge C.
    {
        let normal = cfg.device.ridge_angles()[Terminal::C.index()] + PI / 2.0;
        let errors: Vec<f64> = in_region(Region::R1)
            .filter(|r| r.va < 0.0 && r.vb < 0.0 && r.va != r.vb)
            .map(|r| {
                let e = inplane(r);
                axis_rotation(e[1].atan2(e[0]), normal).to_degrees()
            })
            .collect();
        let worst = errors.iter().cloned().fold(0.0, f64::max);
        report.check(
            2,
            "region-1 field normal to ridge C",
            errors.len() >= 20 && worst <= 5.0,
            format!(
                "{} reverse-quadrant points, worst deviation {worst:.3}°",
                errors.len()
            ),
        );
    }

    // 3. Region-2 angular coverage.
    {
        let angles: Vec<f64> = in_region(Region::R2)
            .map(|r| {
                let e = inplane(r);
                e[1].atan2(e[0])
            })
            .collect();
        let cov = angular_coverage(angles);
        report.check(
            3,
            "region-2 angular coverage",
            cov >= 0.8 * PI,
            format!("{:.3}π rad", cov / PI),
        );
    }

    // 4. Field-magnitude ratio.
    {
        let mag = |r: &SweepRow| {
            let e = inplane(r);
            e[0].hypot(e[1])
        };
        let passing = [Region::R2, Region::R3, Region::R4]
            .into_iter()
            .flat_map(|k| in_region(k))
            .map(mag)
            .fold(0.0, f64::max);
        let blocked = in_region(Region::R1).map(mag).fold(0.0, f64::max);
        let ratio = passing / blocked;
        report.check(
            4,
            "passing / region-1 field ratio",
            (2.0..=8.0).contains(&ratio),
            format!("{passing:.1} / {blocked:.1} V/m = {ratio:.2}"),
        );
    }

    // 5. Conservation and the Laplace limit.
    {
        let floor = cfg.solver.current_floor;
        let worst = ok
            .iter()
            .map(|r| {
                let c = currents(r);
                let scale = c[..3].iter().fold(floor, |m, i| m.max(i.abs()));
                (c[0] + c[1] + c[2] - c[3]).abs() / scale
            })
            .fold(0.0, f64::max);
        let strip = criterion_5_laplace_strip();
        report.check(
            5,
            "Kirchhoff and Laplace strip",
            worst <= 1e-8 && strip <= 0.01 && ok.len() == rows.len(),
            format!(
                "{} converged of {}, worst Kirchhoff {worst:.2e}, strip field error {:.3}%",
                ok.len(),
                rows.len(),
                100.0 * strip
            ),
        );
    }

    // 6. Exciton oracle.
    {
        let worst = criterion_6_worst_mismatch();
        report.check(
            6,
            "closed form vs eigendecomposition",
            worst <= 1e-10,
            format!("1000 draws, worst mismatch {worst:.2e}"),
        );
    }

    // 7. Fit recovery.
    {
        let (worst, ratio) = criterion_7();
        report.check(
            7,
            "sine-fit recovery",
            worst <= 1e-6 && (ratio - 1.0).abs() <= 0.2,
            format!(
                "noiseless worst relative error {worst:.2e}, MC std / reported 1σ = {ratio:.3}"
            ),
        );
    }

    // 8. Cancellation: affine chain and the default calibration.
    let tune: serde_json::Value = {
        let out = Command::new(BIN)
            .args(["tune", "--out-dir"])
            .arg(dirs[2].path())
            .output()
            .expect("pillar runs");
        serde_json::from_slice(&out.stdout).expect("tune prints JSON")
    };
    {
        let (affine_fss, affine_miss) = criterion_8_affine();
        let result = &tune["result"];
        let fss = result["fss"].as_f64().unwrap();
        let rotation = result["rotation"]["rotation"].as_f64().unwrap_or(f64::NAN);
        let pass = affine_fss < 0.1
            && affine_miss < 0.05
            && fss <= 1.5
            && (rotation - PI / 2.0).abs() <= 0.1;
        report.check(
            8,
            "cancellation",
            pass,
            format!(
                "affine chain fss {affine_fss:.2e} µeV ({affine_miss:.1e} V from the analytic zero); \
                 default calibration fss {fss:.2e} µeV at ({}, {}) V, eigenaxis rotation {rotation:.4} rad",
                result["bias"]["va"], result["bias"]["vb"]
            ),
        );
    }

    // 9. Algebraic-FSS sign change along a line through the confirmed zero.
    {
        let model = cfg.device_model().unwrap();
        let theta_ref = reference_axis(&model, &cfg.exciton);
        let rot = &tune["result"]["rotation"];
        let point = |b: &serde_json::Value| [b["va"].as_f64().unwrap(), b["vb"].as_f64().unwrap()];
        let (p0, p1) = (point(&rot["start"]), point(&rot["end"]));
        let mid = [(p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0];
        let dir = {
            let d = [p1[0] - p0[0], p1[1] - p0[1]];
            let n = d[0].hypot(d[1]);
            [d[0] / n, d[1] / n]
        };
        let algebraic = |s: f64| {
            let b = BiasPoint::new(mid[0] + s * dir[0], mid[1] + s * dir[1], cfg.sweep.vc);
            let sol = model.solve(&b, None, &cfg.solver).unwrap();
            exciton_state(&cfg.exciton, sol.e_vector()).algebraic_fss(theta_ref)
        };
        let steps = [0.05, 0.2, 0.5];
        let pairs: Vec<(f64, f64)> = steps
            .iter()
            .map(|&s| (algebraic(-s), algebraic(s)))
            .collect();
        let pass = tune["result"]["converged"].as_bool() == Some(true)
            && pairs.iter().all(|(a, b)| a * b < 0.0);
        report.check(
            9,
            "algebraic FSS changes sign",
            pass,
            format!(
                "θ_ref {theta_ref:.4} rad; at ±{steps:?} V from the zero: {}",
                pairs
                    .iter()
                    .map(|(a, b)| format!("{a:+.3}/{b:+.3}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
    }

    // 10. Stark band and FSS tuning span.
    {
        let span = |xs: Vec<f64>| {
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let stark = 1e6 * span(ok.iter().map(|r| r.mean_energy.unwrap()).collect());
        let fss = span(ok.iter().map(|r| r.fss.unwrap()).collect());
        report.check(
            10,
            "Stark excursion and FSS span",
            (40.0..=160.0).contains(&stark) && (10.0..=30.0).contains(&fss),
            format!("mean-energy excursion {stark:.1} µeV, FSS span {fss:.2} µeV"),
        );
    }

    // 11. Reproducibility.
    {
        let (_, bytes_2, _) = cli_sweep(dirs[1].path(), 2);
        let (_, bytes_3, _) = cli_sweep(dirs[2].path(), 1);
        report.check(
            11,
            "byte-identical sweeps",
            bytes_1 == bytes_2 && bytes_1 == bytes_3,
            format!(
                "{} ({} bytes): jobs=2 identical: {}, repeat jobs=1 identical: {}",
                csv_path.file_name().unwrap().to_string_lossy(),
                bytes_1.len(),
                bytes_1 == bytes_2,
                bytes_1 == bytes_3
            ),
        );
    }

    assert!(
        report.failures.is_empty(),
        "failed criteria: {:?}",
        report.failures
    );
}
