//! `pillar`: command-line front end of the micropillar fine-structure model.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use pillar_core::config::RunConfig;
use pillar_core::device::Terminal;
use pillar_core::exciton::{exciton_state, stark_shift, ExcitonState};
use pillar_core::output::{
    potential_to_csv, scan_from_csv, scan_to_csv, sweep_from_csv, sweep_to_csv, to_json,
    write_atomic,
};
use pillar_core::solver::{classify_regime, BiasPoint, Region, TerminalBias};
use pillar_core::spectro::{fit_fss_sine, synth_polarization_scan, FitResult};
use pillar_core::tuner::{
    find_zero_fss, iso_fss_pairs, iso_fss_points, run_bias_sweep, IsoCandidate, IsoPair, TuneResult,
};
use pillar_core::Error;

/// Process exit codes.
mod exit {
    pub const IO: u8 = 1;
    pub const PARSE: u8 = 2;
    pub const SOLVER: u8 = 3;
    pub const FIT: u8 = 4;
    pub const TUNER: u8 = 5;
}

#[derive(Parser)]
#[command(
    name = "pillar",
    version,
    about = "Three-contact micropillar: fields, fine structure and bias tuning"
)]
struct Cli {
    /// Run configuration (TOML). Defaults to the shipped calibration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one bias point and print the field, currents and exciton state.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        va: TerminalBias,
        #[arg(long, allow_hyphen_values = true)]
        vb: TerminalBias,
        #[arg(long, allow_hyphen_values = true, default_value = "floating")]
        vc: TerminalBias,
        /// Also write the node potentials to this CSV file.
        #[arg(long)]
        potential: Option<PathBuf>,
    },
    /// Evaluate the configured bias grid.
    Sweep {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit the sinusoidal peak-shift law to a polarization scan.
    Fit { scan: PathBuf },
    /// Synthesize a polarization scan at one bias point.
    SynthScan {
        #[arg(long, allow_hyphen_values = true)]
        va: TerminalBias,
        #[arg(long, allow_hyphen_values = true)]
        vb: TerminalBias,
        #[arg(long, allow_hyphen_values = true, default_value = "floating")]
        vc: TerminalBias,
        /// FWHM, µeV (default from config).
        #[arg(long)]
        linewidth: Option<f64>,
        /// Peak-position noise, µeV (default from config).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        n_angles: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Search the bias window for a zero-FSS point.
    Tune {
        /// Target splitting, µeV (default from config).
        #[arg(long)]
        tol: Option<f64>,
        /// Free terminals, e.g. "A,B".
        #[arg(long, default_value = "A,B")]
        free: String,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        va: TerminalBias,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        vb: TerminalBias,
        /// Defaults to the sweep's V_C.
        #[arg(long, allow_hyphen_values = true)]
        vc: Option<TerminalBias>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// List grid-point pairs with similar FSS at distinct mean energies.
    IsoFss {
        /// Sweep CSV to scan; the configured sweep is run when omitted.
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// µeV (default from config).
        #[arg(long)]
        target: Option<f64>,
        /// µeV (default from config).
        #[arg(long)]
        separation: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export the mesh as node and cell CSV tables.
    Mesh {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => exit::IO,
            Error::Config(_) | Error::Schema { .. } | Error::Input(_) | Error::Dimension { .. } => {
                exit::PARSE
            }
            Error::Geometry(_) | Error::Materials(_) => exit::PARSE,
            Error::Mesh(_) | Error::Convergence { .. } | Error::Numerical(_) => exit::SOLVER,
            Error::Fit(_) => exit::FIT,
        };
        let mut message = e.to_string();
        if let Error::Convergence { history, .. } = &e {
            message.push_str("\nresidual history:");
            for (k, r) in history.iter().enumerate() {
                message.push_str(&format!("\n  {k:3}  {r:.3e}"));
            }
        }
        Failure { code, message }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default_calibration(),
    })
}

fn write(path: &Path, text: &str) -> CliResult {
    write_atomic(path, text.as_bytes())?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    print!("{}", to_json(value)?);
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    config_hash: String,
    bias: BiasPoint,
    /// V/m.
    field: [f64; 3],
    /// A.
    currents: [f64; 3],
    i_junction: f64,
    region: Region,
    pad_potential: [Option<f64>; 3],
    newton_iters: usize,
    residual: f64,
    exciton: ExcitonState,
    #[serde(rename = "stark_shift_ueV")]
    stark_shift_uev: f64,
}

fn cmd_solve(cfg: &RunConfig, bias: BiasPoint, potential: Option<&Path>) -> CliResult {
    let model = cfg.device_model()?;
    let sol = model.solve(&bias, None, &cfg.solver)?;
    let field = sol.e_vector();
    let report = SolveReport {
        config_hash: cfg.hash(),
        bias,
        field,
        currents: sol.terminal_current,
        i_junction: sol.i_junction,
        region: classify_regime(&sol, cfg.solver.regime_threshold),
        pad_potential: sol.pad_potential.map(|p| p.is_finite().then_some(p)),
        newton_iters: sol.newton_iters,
        residual: sol.residual,
        exciton: exciton_state(&cfg.exciton, field),
        stark_shift_uev: stark_shift(&cfg.exciton, field[2]),
    };
    if let Some(p) = potential {
        write(p, &potential_to_csv(&model, &sol)?)?;
    }
    print_json(&report)
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> CliResult {
    let model = cfg.device_model()?;
    let mut result = run_bias_sweep(&cfg.sweep, &model, &cfg.exciton, &cfg.solver, jobs)?;
    result.meta.config_hash = cfg.hash();
    let stem = format!("sweep_{}", cfg.short_hash());
    write(
        &out_dir.join(format!("{stem}.csv")),
        &sweep_to_csv(&result)?,
    )?;
    write(
        &out_dir.join(format!("{stem}.json")),
        &to_json(&result.meta)?,
    )?;
    eprintln!(
        "{} cells, {} failed, {:.1} s",
        result.meta.cells, result.meta.failed_cells, result.meta.wall_seconds
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    config_hash: String,
    scan: String,
    fit: FitResult,
}

fn cmd_fit(cfg: &RunConfig, path: &Path) -> CliResult {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let scan = scan_from_csv(&text)?;
    let fit = fit_fss_sine(&scan)?;
    eprintln!(
        "delta_fss = {:.4} ± {:.4} µeV\ntheta0    = {:.4} ± {:.4} rad\noffset    = {:.4} ± {:.4} µeV\nrms       = {:.4} µeV",
        fit.delta_fss,
        fit.uncertainties[0],
        fit.theta0,
        fit.uncertainties[1],
        fit.offset,
        fit.uncertainties[2],
        fit.residual_rms
    );
    print_json(&FitReport {
        config_hash: cfg.hash(),
        scan: path.display().to_string(),
        fit,
    })
}

#[derive(Serialize)]
struct ScanMeta {
    config_hash: String,
    bias: BiasPoint,
    field: [f64; 3],
    exciton: ExcitonState,
    #[serde(rename = "linewidth_ueV")]
    linewidth_uev: f64,
    #[serde(rename = "noise_sigma_ueV")]
    noise_sigma_uev: f64,
    n_angles: usize,
    seed: u64,
    /// Energies in the CSV are relative to this value, eV.
    #[serde(rename = "reference_energy_eV")]
    reference_energy_ev: f64,
}

fn cmd_synth_scan(cfg: &RunConfig, bias: BiasPoint, out_dir: &Path) -> CliResult {
    let model = cfg.device_model()?;
    let sol = model.solve(&bias, None, &cfg.solver)?;
    let field = sol.e_vector();
    let s = &cfg.scan;
    let scan = synth_polarization_scan(
        &cfg.exciton,
        field,
        s.linewidth,
        s.noise_sigma,
        s.n_angles,
        cfg.seed,
    )?;
    let stem = format!("scan_{}", cfg.short_hash());
    write(&out_dir.join(format!("{stem}.csv")), &scan_to_csv(&scan)?)?;
    let meta = ScanMeta {
        config_hash: cfg.hash(),
        bias,
        field,
        exciton: exciton_state(&cfg.exciton, field),
        linewidth_uev: s.linewidth,
        noise_sigma_uev: s.noise_sigma,
        n_angles: s.n_angles,
        seed: cfg.seed,
        reference_energy_ev: cfg.exciton.e0,
    };
    write(&out_dir.join(format!("{stem}.json")), &to_json(&meta)?)
}

#[derive(Serialize)]
struct TuneReport {
    config_hash: String,
    result: TuneResult,
}

fn parse_terminals(list: &str) -> CliResult<Vec<Terminal>> {
    list.split(',')
        .map(|s| match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Terminal::A),
            "B" => Ok(Terminal::B),
            "C" => Ok(Terminal::C),
            other => Err(fail(
                exit::PARSE,
                format!("unknown terminal '{other}' in --free"),
            )),
        })
        .collect()
}

fn cmd_tune(cfg: &RunConfig, free: &[Terminal], start: BiasPoint, out_dir: &Path) -> CliResult {
    let model = cfg.device_model()?;
    let result = find_zero_fss(&start, free, &model, &cfg.exciton, &cfg.solver, &cfg.tuner)?;
    eprintln!(
        "fss = {:.4} µeV at ({}, {}, {}); rotation {:?}",
        result.fss, result.bias.va, result.bias.vb, result.bias.vc, result.rotation.status
    );
    let report = TuneReport {
        config_hash: cfg.hash(),
        result,
    };
    let text = to_json(&report)?;
    write(
        &out_dir.join(format!("tune_{}.json", cfg.short_hash())),
        &text,
    )?;
    print!("{text}");
    if !report.result.converged {
        return Err(fail(
            exit::TUNER,
            format!(
                "no point with fss ≤ {:e} µeV found; best {:.3e} µeV at {}",
                report.result.tol, report.result.fss, report.result.bias
            ),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct IsoReport {
    config_hash: String,
    #[serde(rename = "target_fss_ueV")]
    target_fss_uev: f64,
    #[serde(rename = "min_energy_separation_ueV")]
    min_energy_separation_uev: f64,
    pairs: Vec<IsoPair>,
}

fn cmd_iso(cfg: &RunConfig, sweep: Option<&Path>, jobs: usize) -> CliResult {
    let (target, sep) = (cfg.iso_fss.target_fss, cfg.iso_fss.min_energy_separation);
    let pairs = match sweep {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            let (rows, _) = sweep_from_csv(&text)?;
            let candidates: Vec<IsoCandidate> = rows
                .iter()
                .filter_map(|r| {
                    Some(IsoCandidate {
                        index: r.index,
                        bias: BiasPoint::new(r.va, r.vb, r.vc),
                        fss: r.fss?,
                        mean_energy: r.mean_energy?,
                    })
                })
                .collect();
            if candidates.is_empty() {
                return Err(fail(
                    exit::PARSE,
                    "sweep table has no converged rows with fss_ueV and mean_energy_eV",
                ));
            }
            iso_fss_pairs(&candidates, target, sep)
        }
        None => {
            let model = cfg.device_model()?;
            let result = run_bias_sweep(&cfg.sweep, &model, &cfg.exciton, &cfg.solver, jobs)?;
            iso_fss_points(&result, target, sep)
        }
    };
    eprintln!("{} pairs", pairs.len());
    print_json(&IsoReport {
        config_hash: cfg.hash(),
        target_fss_uev: target,
        min_energy_separation_uev: sep,
        pairs,
    })
}

fn cmd_mesh(cfg: &RunConfig, out_dir: &Path) -> CliResult {
    let model = cfg.device_model()?;
    let stem = format!("mesh_{}", cfg.short_hash());
    model.mesh().write_csv(out_dir, &stem)?;
    eprintln!(
        "wrote {}/{stem}_nodes.csv and {stem}_cells.csv ({} nodes, {} cells)",
        out_dir.display(),
        model.mesh().node_count(),
        model.mesh().cells().len()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Solve {
            va,
            vb,
            vc,
            potential,
        } => cmd_solve(&cfg, BiasPoint { va, vb, vc }, potential.as_deref()),
        Command::Sweep { out_dir, jobs } => cmd_sweep(&cfg, &out_dir, jobs),
        Command::Fit { scan } => cmd_fit(&cfg, &scan),
        Command::SynthScan {
            va,
            vb,
            vc,
            linewidth,
            noise,
            n_angles,
            seed,
            out_dir,
        } => {
            // Overrides are folded into the config so the hash reflects them.
            cfg.scan.linewidth = linewidth.unwrap_or(cfg.scan.linewidth);
            cfg.scan.noise_sigma = noise.unwrap_or(cfg.scan.noise_sigma);
            cfg.scan.n_angles = n_angles.unwrap_or(cfg.scan.n_angles);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            cmd_synth_scan(&cfg, BiasPoint { va, vb, vc }, &out_dir)
        }
        Command::Tune {
            tol,
            free,
            va,
            vb,
            vc,
            out_dir,
        } => {
            cfg.tuner.tol = tol.unwrap_or(cfg.tuner.tol);
            cfg.validate()?;
            let free = parse_terminals(&free)?;
            let start = BiasPoint {
                va,
                vb,
                vc: vc.unwrap_or(cfg.sweep.vc),
            };
            cmd_tune(&cfg, &free, start, &out_dir)
        }
        Command::IsoFss {
            sweep,
            target,
            separation,
            jobs,
        } => {
            cfg.iso_fss.target_fss = target.unwrap_or(cfg.iso_fss.target_fss);
            cfg.iso_fss.min_energy_separation =
                separation.unwrap_or(cfg.iso_fss.min_energy_separation);
            cfg.validate()?;
            cmd_iso(&cfg, sweep.as_deref(), jobs)
        }
        Command::Mesh { out_dir } => cmd_mesh(&cfg, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
