//! Round trips of the on-disk formats.

use pillar_core::config::RunConfig;
use pillar_core::output::{
    fmt_f64, scan_from_csv, scan_to_csv, sweep_from_csv, sweep_rows, sweep_rows_to_csv,
    sweep_to_csv,
};
use pillar_core::solver::TerminalBias;
use pillar_core::spectro::PolarizationScan;
use pillar_core::tuner::{run_bias_sweep, BiasRange, SweepOutput, SweepSpec};
use pillar_core::Error;
use proptest::prelude::*;

fn small_sweep(outputs: Vec<SweepOutput>) -> pillar_core::tuner::SweepResult {
    let cfg = RunConfig::default_calibration();
    let model = cfg.device_model().unwrap();
    let spec = SweepSpec {
        va: BiasRange {
            start: -1.0,
            stop: 3.0,
            step: 2.0,
        },
        vb: BiasRange {
            start: 0.0,
            stop: 4.5,
            step: 2.25,
        },
        vc: TerminalBias::Floating,
        outputs,
    };
    run_bias_sweep(&spec, &model, &cfg.exciton, &cfg.solver, 1).unwrap()
}

#[test]
fn sweep_table_round_trips() {
    let result = small_sweep(RunConfig::default_calibration().sweep.outputs);
    let text = sweep_to_csv(&result).unwrap();
    let (rows, groups) = sweep_from_csv(&text).unwrap();
    assert_eq!(rows, sweep_rows(&result));
    assert_eq!(groups, SweepOutput::ALL.to_vec());
    assert_eq!(sweep_rows_to_csv(&rows, &groups).unwrap(), text);
}

#[test]
fn partial_output_groups_round_trip() {
    let result = small_sweep(vec![SweepOutput::Stark, SweepOutput::Fields]);
    let text = sweep_to_csv(&result).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "index,i,j,va_V,vb_V,vc_V,status,newton_iters,residual,\
         ex_V_per_m,ey_V_per_m,ez_V_per_m,mean_energy_eV,stark_shift_ueV,message"
    );
    let (rows, groups) = sweep_from_csv(&text).unwrap();
    assert_eq!(groups, vec![SweepOutput::Fields, SweepOutput::Stark]);
    assert!(rows.iter().all(|r| r.fss.is_none() && r.field.is_some()));
}

#[test]
fn failed_rows_round_trip() {
    let result = small_sweep(RunConfig::default_calibration().sweep.outputs);
    let mut rows = sweep_rows(&result);
    let failed = &mut rows[2];
    *failed = pillar_core::output::SweepRow {
        ok: false,
        newton_iters: None,
        residual: None,
        field: None,
        currents: None,
        region: None,
        fss: None,
        theta0: None,
        algebraic_fss: None,
        mean_energy: None,
        stark_shift: None,
        message: "Newton iteration stalled, residual 3e-2".into(),
        ..failed.clone()
    };
    let groups = SweepOutput::ALL.to_vec();
    let text = sweep_rows_to_csv(&rows, &groups).unwrap();
    let (back, _) = sweep_from_csv(&text).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn malformed_sweep_cell_names_its_row() {
    let result = small_sweep(vec![SweepOutput::Fss]);
    let text = sweep_to_csv(&result).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = lines[3].replacen(",ok,", ",maybe,", 1);
    match sweep_from_csv(&lines.join("\n")) {
        Err(Error::Schema { .. }) => {}
        other => panic!("expected a schema error, got {other:?}"),
    }
    let err = sweep_from_csv(&lines.join("\n")).unwrap_err().to_string();
    assert!(err.contains("row 4"), "{err}");
}

#[test]
fn scan_table_round_trips_with_and_without_sigma() {
    let scan = PolarizationScan {
        angles: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
        peak_energies: vec![1.25, -0.1, 3.0e-7, 12.0, 5.5, 0.333],
        sigma: vec![0.5; 6],
    };
    assert_eq!(scan_from_csv(&scan_to_csv(&scan).unwrap()).unwrap(), scan);
    let bare = "angle_rad,energy_ueV\n0,1\n0.5,2\n1,3\n1.5,4\n2,5\n2.5,6\n";
    let parsed = scan_from_csv(bare).unwrap();
    assert_eq!(parsed.sigma, vec![0.0; 6]);
    assert_eq!(parsed.peak_energies, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn config_hash_is_stable_across_a_toml_round_trip() {
    let cfg = RunConfig::default_calibration();
    let text = toml::to_string(&cfg).unwrap();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.short_hash().len(), 12);
}

proptest! {
    #[test]
    fn floats_round_trip_through_text(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let s = fmt_f64(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
