//! File formats: atomic writes, sweep / scan / potential CSV tables and
//! their readers. Column orders are fixed and documented in
//! `docs/formats.md`; floats are written in shortest round-trip form, so
//! every table re-parses to identical values.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{DeviceModel, FieldSolution, Region, TerminalBias};
use crate::spectro::PolarizationScan;
use crate::tuner::{SweepOutput, SweepResult};

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        let mut b = ryu::Buffer::new();
        let s = b.format_finite(x);
        s.strip_suffix(".0").unwrap_or(s).to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_bias(b: TerminalBias) -> String {
    match b {
        TerminalBias::Fixed(v) => fmt_f64(v),
        TerminalBias::Floating => "floating".into(),
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Input(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

/// Header-indexed access to one CSV table with row-numbered errors.
struct Table {
    context: String,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(text: &str, context: &str) -> Result<Table> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let schema = |row: usize, message: String| Error::Schema {
            context: context.to_string(),
            row,
            message,
        };
        let header = r.headers().map_err(|e| schema(1, e.to_string()))?.clone();
        let columns = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            // Data rows are numbered from 2: the header is row 1.
            let rec = rec.map_err(|e| schema(k + 2, e.to_string()))?;
            rows.push(rec);
        }
        Ok(Table {
            context: context.to_string(),
            columns,
            rows,
        })
    }

    fn err(&self, row: usize, message: impl Into<String>) -> Error {
        Error::Schema {
            context: self.context.clone(),
            row,
            message: message.into(),
        }
    }

    fn has(&self, col: &str) -> bool {
        self.columns.contains_key(col)
    }

    fn require(&self, cols: &[&str]) -> Result<()> {
        for c in cols {
            if !self.has(c) {
                return Err(self.err(1, format!("missing column '{c}'")));
            }
        }
        Ok(())
    }

    /// Raw field of data row `k` (0-based).
    fn raw(&self, k: usize, col: &str) -> Result<&str> {
        let idx = self.columns[col];
        self.rows[k]
            .get(idx)
            .ok_or_else(|| self.err(k + 2, format!("missing field '{col}'")))
    }

    fn parse_f64(&self, k: usize, col: &str) -> Result<f64> {
        let s = self.raw(k, col)?;
        s.parse::<f64>()
            .map_err(|_| self.err(k + 2, format!("column '{col}': '{s}' is not a number")))
    }

    fn opt_f64(&self, k: usize, col: &str) -> Result<Option<f64>> {
        if self.raw(k, col)?.is_empty() {
            Ok(None)
        } else {
            self.parse_f64(k, col).map(Some)
        }
    }

    fn parse_usize(&self, k: usize, col: &str) -> Result<usize> {
        let s = self.raw(k, col)?;
        s.parse::<usize>()
            .map_err(|_| self.err(k + 2, format!("column '{col}': '{s}' is not a count")))
    }

    fn opt_usize(&self, k: usize, col: &str) -> Result<Option<usize>> {
        if self.raw(k, col)?.is_empty() {
            Ok(None)
        } else {
            self.parse_usize(k, col).map(Some)
        }
    }
}

// ---------------------------------------------------------------- scans

pub const SCAN_HEADER: [&str; 3] = ["angle_rad", "energy_ueV", "sigma_ueV"];

pub fn scan_to_csv(scan: &PolarizationScan) -> Result<String> {
    let rows = (0..scan.len()).map(|i| {
        vec![
            fmt_f64(scan.angles[i]),
            fmt_f64(scan.peak_energies[i]),
            fmt_f64(scan.sigma[i]),
        ]
    });
    csv_string(&SCAN_HEADER, rows)
}

/// Parses a scan table; a missing `sigma_ueV` column means unknown noise.
pub fn scan_from_csv(text: &str) -> Result<PolarizationScan> {
    let t = Table::parse(text, "scan")?;
    t.require(&SCAN_HEADER[..2])?;
    let with_sigma = t.has("sigma_ueV");
    let mut scan = PolarizationScan {
        angles: Vec::new(),
        peak_energies: Vec::new(),
        sigma: Vec::new(),
    };
    for k in 0..t.rows.len() {
        let a = t.parse_f64(k, "angle_rad")?;
        let e = t.parse_f64(k, "energy_ueV")?;
        let s = if with_sigma {
            t.parse_f64(k, "sigma_ueV")?
        } else {
            0.0
        };
        if !a.is_finite() || !e.is_finite() || !(s >= 0.0) || !s.is_finite() {
            return Err(t.err(k + 2, "values must be finite and sigma ≥ 0"));
        }
        scan.angles.push(a);
        scan.peak_energies.push(e);
        scan.sigma.push(s);
    }
    Ok(scan)
}

// ---------------------------------------------------------------- sweeps

/// One row of the sweep table. Groups that were not requested, and every
/// value of a failed cell, are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub i: usize,
    pub j: usize,
    pub va: f64,
    pub vb: f64,
    pub vc: TerminalBias,
    pub ok: bool,
    pub newton_iters: Option<usize>,
    pub residual: Option<f64>,
    pub field: Option<[f64; 3]>,
    /// `(I_A, I_B, I_C, I_junction)`.
    pub currents: Option<[f64; 4]>,
    pub region: Option<Region>,
    pub fss: Option<f64>,
    pub theta0: Option<f64>,
    pub algebraic_fss: Option<f64>,
    pub mean_energy: Option<f64>,
    pub stark_shift: Option<f64>,
    pub message: String,
}

const BASE_COLUMNS: [&str; 9] = [
    "index",
    "i",
    "j",
    "va_V",
    "vb_V",
    "vc_V",
    "status",
    "newton_iters",
    "residual",
];

pub fn output_columns(group: SweepOutput) -> &'static [&'static str] {
    match group {
        SweepOutput::Fields => &["ex_V_per_m", "ey_V_per_m", "ez_V_per_m"],
        SweepOutput::Currents => &["ia_A", "ib_A", "ic_A", "ijunction_A"],
        SweepOutput::Regime => &["region"],
        SweepOutput::Fss => &["fss_ueV"],
        SweepOutput::Theta0 => &["theta0_rad"],
        SweepOutput::AlgebraicFss => &["algebraic_fss_ueV"],
        SweepOutput::Stark => &["mean_energy_eV", "stark_shift_ueV"],
    }
}

/// Table rows of a sweep, restricted to the requested groups.
pub fn sweep_rows(result: &SweepResult) -> Vec<SweepRow> {
    let want = |g| result.meta.outputs.contains(&g);
    result
        .records
        .iter()
        .map(|r| {
            let v = r.values();
            SweepRow {
                index: r.index,
                i: r.i,
                j: r.j,
                va: r.va(),
                vb: r.vb(),
                vc: r.bias.vc,
                ok: v.is_some(),
                newton_iters: v.map(|v| v.newton_iters),
                residual: v.map(|v| v.residual),
                field: v.filter(|_| want(SweepOutput::Fields)).map(|v| v.field),
                currents: v
                    .filter(|_| want(SweepOutput::Currents))
                    .map(|v| [v.currents[0], v.currents[1], v.currents[2], v.i_junction]),
                region: v.filter(|_| want(SweepOutput::Regime)).map(|v| v.region),
                fss: v.filter(|_| want(SweepOutput::Fss)).map(|v| v.fss),
                theta0: v
                    .filter(|_| want(SweepOutput::Theta0))
                    .and_then(|v| v.theta0),
                algebraic_fss: v
                    .filter(|_| want(SweepOutput::AlgebraicFss))
                    .map(|v| v.algebraic_fss),
                mean_energy: v
                    .filter(|_| want(SweepOutput::Stark))
                    .map(|v| v.mean_energy),
                stark_shift: v
                    .filter(|_| want(SweepOutput::Stark))
                    .map(|v| v.stark_shift),
                message: r.outcome.as_ref().err().cloned().unwrap_or_default(),
            }
        })
        .collect()
}

pub fn sweep_header(outputs: &[SweepOutput]) -> Vec<&'static str> {
    let mut groups = outputs.to_vec();
    groups.sort();
    groups.dedup();
    let mut h: Vec<&str> = BASE_COLUMNS.to_vec();
    for g in groups {
        h.extend_from_slice(output_columns(g));
    }
    h.push("message");
    h
}

pub fn sweep_rows_to_csv(rows: &[SweepRow], outputs: &[SweepOutput]) -> Result<String> {
    let mut groups = outputs.to_vec();
    groups.sort();
    groups.dedup();
    let header = sweep_header(&groups);
    let records = rows.iter().map(|r| {
        let mut rec = vec![
            r.index.to_string(),
            r.i.to_string(),
            r.j.to_string(),
            fmt_f64(r.va),
            fmt_f64(r.vb),
            fmt_bias(r.vc),
            if r.ok { "ok" } else { "failed" }.to_string(),
            r.newton_iters.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(r.residual),
        ];
        for g in &groups {
            match g {
                SweepOutput::Fields => {
                    rec.extend((0..3).map(|k| fmt_opt(r.field.map(|f| f[k]))));
                }
                SweepOutput::Currents => {
                    rec.extend((0..4).map(|k| fmt_opt(r.currents.map(|c| c[k]))));
                }
                SweepOutput::Regime => {
                    rec.push(r.region.map(|x| x.number().to_string()).unwrap_or_default())
                }
                SweepOutput::Fss => rec.push(fmt_opt(r.fss)),
                SweepOutput::Theta0 => rec.push(fmt_opt(r.theta0)),
                SweepOutput::AlgebraicFss => rec.push(fmt_opt(r.algebraic_fss)),
                SweepOutput::Stark => {
                    rec.push(fmt_opt(r.mean_energy));
                    rec.push(fmt_opt(r.stark_shift));
                }
            }
        }
        rec.push(r.message.clone());
        rec
    });
    csv_string(&header, records)
}

pub fn sweep_to_csv(result: &SweepResult) -> Result<String> {
    sweep_rows_to_csv(&sweep_rows(result), &result.meta.outputs)
}

/// Parses a sweep table, returning the rows and the column groups present.
pub fn sweep_from_csv(text: &str) -> Result<(Vec<SweepRow>, Vec<SweepOutput>)> {
    let t = Table::parse(text, "sweep")?;
    t.require(&BASE_COLUMNS)?;
    t.require(&["message"])?;
    let mut groups = Vec::new();
    for g in SweepOutput::ALL {
        let cols = output_columns(g);
        let present = cols.iter().filter(|c| t.has(c)).count();
        if present == cols.len() {
            groups.push(g);
        } else if present > 0 {
            return Err(t.err(1, format!("incomplete column group {g:?}")));
        }
    }
    let has = |g| groups.contains(&g);
    let mut rows = Vec::with_capacity(t.rows.len());
    for k in 0..t.rows.len() {
        let ok = match t.raw(k, "status")? {
            "ok" => true,
            "failed" => false,
            s => return Err(t.err(k + 2, format!("status '{s}' is neither ok nor failed"))),
        };
        let vc = t
            .raw(k, "vc_V")?
            .parse::<TerminalBias>()
            .map_err(|e| t.err(k + 2, e.to_string()))?;
        let all3 = |cols: &[&str]| -> Result<Option<Vec<f64>>> {
            let vals = cols
                .iter()
                .map(|c| t.opt_f64(k, c))
                .collect::<Result<Vec<_>>>()?;
            Ok(vals.into_iter().collect())
        };
        let field = if has(SweepOutput::Fields) {
            all3(output_columns(SweepOutput::Fields))?.map(|v| [v[0], v[1], v[2]])
        } else {
            None
        };
        let currents = if has(SweepOutput::Currents) {
            all3(output_columns(SweepOutput::Currents))?.map(|v| [v[0], v[1], v[2], v[3]])
        } else {
            None
        };
        let region = if has(SweepOutput::Regime) {
            match t.opt_usize(k, "region")? {
                None => None,
                Some(n) => Some(
                    u8::try_from(n)
                        .ok()
                        .and_then(Region::from_number)
                        .ok_or_else(|| t.err(k + 2, format!("region {n} not in 1..=4")))?,
                ),
            }
        } else {
            None
        };
        let opt = |g, c: &str| -> Result<Option<f64>> {
            if has(g) {
                t.opt_f64(k, c)
            } else {
                Ok(None)
            }
        };
        rows.push(SweepRow {
            index: t.parse_usize(k, "index")?,
            i: t.parse_usize(k, "i")?,
            j: t.parse_usize(k, "j")?,
            va: t.parse_f64(k, "va_V")?,
            vb: t.parse_f64(k, "vb_V")?,
            vc,
            ok,
            newton_iters: t.opt_usize(k, "newton_iters")?,
            residual: t.opt_f64(k, "residual")?,
            field,
            currents,
            region,
            fss: opt(SweepOutput::Fss, "fss_ueV")?,
            theta0: opt(SweepOutput::Theta0, "theta0_rad")?,
            algebraic_fss: opt(SweepOutput::AlgebraicFss, "algebraic_fss_ueV")?,
            mean_energy: opt(SweepOutput::Stark, "mean_energy_eV")?,
            stark_shift: opt(SweepOutput::Stark, "stark_shift_ueV")?,
            message: t.raw(k, "message")?.to_string(),
        });
    }
    Ok((rows, groups))
}

// ------------------------------------------------------------ potential

/// Node-indexed potential of one solve.
pub fn potential_to_csv(model: &DeviceModel, solution: &FieldSolution) -> Result<String> {
    let mesh = model.mesh();
    let rows = mesh
        .nodes()
        .iter()
        .zip(mesh.tags())
        .zip(&solution.phi)
        .enumerate()
        .map(|(i, ((p, tag), phi))| {
            vec![
                i.to_string(),
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                tag.to_string(),
                fmt_f64(*phi),
            ]
        });
    csv_string(&["node", "x_um", "y_um", "tag", "phi_V"], rows)
}

/// Pretty JSON with the struct's declared key order and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Input(format!("JSON encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}
