//! File formats.
//!
//! CSV files start with a `#schema=<version>` comment line, then a header,
//! then data rows. Numbers are written with 17 significant digits so a
//! write/read cycle is bit-exact. The readers are strict: wrong field counts,
//! non-numeric or non-finite fields and non-increasing frequencies are errors
//! that carry the 1-based line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FitResult, PhasorPoint};
use crate::interferometer::{FringeTrace, TraceMeta, TRACE_SCHEMA_VERSION};

pub const TRACE_HEADER: &str = "freq_ghz,counts";
pub const PHASOR_SCHEMA_VERSION: &str = "qdphase.phasors/1";
pub const PHASOR_HEADER: &str = "freq_ghz,phase_rad,phase_err,amp_ratio,amp_err,offset_ratio,offset_err";
pub const FIT_SCHEMA_VERSION: &str = "qdphase.fit/1";
pub const TABLE_SCHEMA_VERSION: &str = "qdphase.table/1";

/// Format one value with 17 significant digits.
#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a numeric table as CSV text.
pub fn csv_table(schema: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#schema={schema}");
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Parsed numeric table with the schema line, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub schema: Option<String>,
    pub rows: Vec<Vec<f64>>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

/// Strict numeric CSV reader for a known header.
pub fn parse_csv_table(text: &str, header: &str) -> Result<CsvTable> {
    let width = header.split(',').count();
    let mut schema = None;
    let mut seen_header = false;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if !seen_header {
                if let Some(v) = c.trim().strip_prefix("schema=") {
                    schema = Some(v.trim().to_string());
                }
            }
            continue;
        }
        if !seen_header {
            let got: Vec<&str> = line.split(',').map(str::trim).collect();
            if got.join(",") != header {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected header '{header}', found '{line}'"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (col, f) in fields.iter().enumerate() {
            let f = f.trim();
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("column {} is not a number: '{f}'", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("column {} is not finite: '{f}'", col + 1),
                });
            }
            row.push(v);
        }
        rows.push(row);
        lines.push(line_no);
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("missing header '{header}'"),
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            msg: "no data rows".into(),
        });
    }
    Ok(CsvTable { schema, rows, lines })
}

fn check_increasing(t: &CsvTable) -> Result<()> {
    for k in 1..t.rows.len() {
        if !(t.rows[k][0] > t.rows[k - 1][0]) {
            return Err(Error::Parse {
                line: t.lines[k],
                msg: format!(
                    "frequency {} does not increase past {}",
                    t.rows[k][0],
                    t.rows[k - 1][0]
                ),
            });
        }
    }
    Ok(())
}

fn check_schema(t: &CsvTable, expected: &str) -> Result<()> {
    match &t.schema {
        Some(s) if s != expected => Err(Error::Parse {
            line: 1,
            msg: format!("schema '{s}' is not '{expected}'"),
        }),
        _ => Ok(()),
    }
}

pub fn trace_to_csv(trace: &FringeTrace) -> String {
    csv_table(
        TRACE_SCHEMA_VERSION,
        &["freq_ghz", "counts"],
        trace.freq.iter().zip(&trace.counts).map(|(&f, &c)| vec![f, c]),
    )
}

/// Parse trace CSV text. Metadata is not part of the CSV.
pub fn parse_trace_csv_str(text: &str) -> Result<FringeTrace> {
    let t = parse_csv_table(text, TRACE_HEADER)?;
    check_schema(&t, TRACE_SCHEMA_VERSION)?;
    check_increasing(&t)?;
    for (row, &line) in t.rows.iter().zip(&t.lines) {
        if row[1] < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("negative counts {}", row[1]),
            });
        }
    }
    FringeTrace::new(
        t.rows.iter().map(|r| r[0]).collect(),
        t.rows.iter().map(|r| r[1]).collect(),
    )
}

/// Sidecar path holding a trace's metadata.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a trace CSV plus its JSON sidecar when one exists.
pub fn parse_trace_csv(path: &Path) -> Result<FringeTrace> {
    let mut trace = parse_trace_csv_str(&read_text(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: TraceMeta = serde_json::from_str(&read_text(&side)?)?;
        trace.meta = Some(meta);
    }
    Ok(trace)
}

/// Write a trace CSV and, if it carries metadata, its JSON sidecar.
/// Returns the paths written.
pub fn write_trace(path: &Path, trace: &FringeTrace) -> Result<Vec<PathBuf>> {
    trace.validate()?;
    write_text(path, &trace_to_csv(trace))?;
    let mut written = vec![path.to_path_buf()];
    if let Some(meta) = &trace.meta {
        let side = sidecar_path(path);
        write_text(&side, &to_json(meta)?)?;
        written.push(side);
    }
    Ok(written)
}

pub fn phasors_to_csv(pts: &[PhasorPoint]) -> String {
    csv_table(
        PHASOR_SCHEMA_VERSION,
        &PHASOR_HEADER.split(',').collect::<Vec<_>>(),
        pts.iter().map(|p| {
            vec![
                p.freq,
                p.phase_shift,
                p.phase_err,
                p.amp_ratio,
                p.amp_err,
                p.offset_ratio,
                p.offset_err,
            ]
        }),
    )
}

/// Parse a phasor CSV. The low-contrast flag is not stored in CSV and reads
/// back as `false`.
pub fn parse_phasor_csv_str(text: &str) -> Result<Vec<PhasorPoint>> {
    let t = parse_csv_table(text, PHASOR_HEADER)?;
    check_schema(&t, PHASOR_SCHEMA_VERSION)?;
    check_increasing(&t)?;
    t.rows
        .iter()
        .zip(&t.lines)
        .map(|(r, &line)| {
            if r[2] < 0.0 || r[3] < 0.0 || r[4] < 0.0 || r[6] < 0.0 {
                return Err(Error::Parse {
                    line,
                    msg: "amplitude ratio and uncertainties must be >= 0".into(),
                });
            }
            Ok(PhasorPoint {
                freq: r[0],
                phase_shift: r[1],
                phase_err: r[2],
                amp_ratio: r[3],
                amp_err: r[4],
                offset_ratio: r[5],
                offset_err: r[6],
                low_contrast: false,
            })
        })
        .collect()
}

pub fn parse_phasor_csv(path: &Path) -> Result<Vec<PhasorPoint>> {
    parse_phasor_csv_str(&read_text(path)?)
}

pub fn write_phasor_csv(path: &Path, pts: &[PhasorPoint]) -> Result<()> {
    write_text(path, &phasors_to_csv(pts))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedParameter {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub at_bound: bool,
}

/// Versioned JSON view of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub schema_version: String,
    pub kind: String,
    pub parameters: Vec<NamedParameter>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub n_data: usize,
    pub n_iter: usize,
    pub converged: bool,
    pub covariance: Vec<Vec<f64>>,
    pub flat_directions: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    /// Derived quantities such as the critical photon flux.
    #[serde(default)]
    pub derived: BTreeMap<String, f64>,
}

impl FitSummary {
    pub fn new(kind: impl Into<String>, fit: &FitResult) -> Self {
        FitSummary {
            schema_version: FIT_SCHEMA_VERSION.into(),
            kind: kind.into(),
            parameters: (0..fit.params.len())
                .map(|i| NamedParameter {
                    name: fit.names[i].clone(),
                    value: fit.params[i],
                    sigma: fit.sigma(i),
                    at_bound: fit.at_bound[i],
                })
                .collect(),
            chi2: fit.chi2,
            reduced_chi2: fit.reduced_chi2(),
            n_data: fit.n_data,
            n_iter: fit.n_iter,
            converged: fit.converged,
            covariance: fit.covariance.clone(),
            flat_directions: fit.flat_directions.clone(),
            warnings: fit.warnings.clone(),
            derived: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip_is_bitwise() {
        let freq = vec![-1.0, -0.1 + 1e-17, 0.0, 1.0 / 3.0, 2.5e-300];
        let counts = vec![0.0, 1e-300, 123_456_789.123_456_79, 0.1 + 0.2, 7.0];
        let mut sorted = freq.clone();
        sorted.sort_by(f64::total_cmp);
        let t = FringeTrace::new(sorted, counts).unwrap();
        let back = parse_trace_csv_str(&trace_to_csv(&t)).unwrap();
        for (a, b) in t.freq.iter().zip(&back.freq).chain(t.counts.iter().zip(&back.counts)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn decreasing_frequency_rejected_with_line() {
        let text = "freq_ghz,counts\n0.0,1\n0.2,1\n0.1,1\n";
        match parse_trace_csv_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn locale_comma_is_a_parse_error() {
        let text = "freq_ghz,counts\n0,5,1\n";
        assert!(matches!(parse_trace_csv_str(text), Err(Error::Parse { line: 2, .. })));
        let text = "freq_ghz,counts\n0;5,1\n";
        assert!(matches!(parse_trace_csv_str(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn nan_and_inf_rejected() {
        for bad in ["NaN", "inf", "-inf"] {
            let text = format!("freq_ghz,counts\n0,{bad}\n");
            assert!(matches!(parse_trace_csv_str(&text), Err(Error::Parse { line: 2, .. })));
        }
    }

    #[test]
    fn truncated_row_reports_line() {
        let text = "#schema=qdphase.trace/1\nfreq_ghz,counts\n0,1\n1,2\n2";
        assert!(matches!(parse_trace_csv_str(text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(parse_trace_csv_str("0,1\n1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_trace_csv_str("freq_ghz,counts\n").is_err());
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = "#schema=qdphase.phasors/1\nfreq_ghz,counts\n0,1\n";
        assert!(parse_trace_csv_str(text).is_err());
    }

    #[test]
    fn phasor_round_trip() {
        let pts = vec![
            PhasorPoint {
                freq: 0.1,
                phase_shift: -0.3,
                phase_err: 1e-3,
                amp_ratio: 0.9,
                amp_err: 2e-3,
                offset_ratio: 0.8,
                offset_err: 3e-3,
                low_contrast: false,
            },
            PhasorPoint {
                freq: 0.2,
                phase_shift: std::f64::consts::PI,
                phase_err: 0.0,
                amp_ratio: 0.0,
                amp_err: 0.0,
                offset_ratio: -0.1,
                offset_err: 0.0,
                low_contrast: false,
            },
        ];
        let text = phasors_to_csv(&pts);
        assert!(text.lines().nth(1).unwrap() == PHASOR_HEADER);
        assert_eq!(parse_phasor_csv_str(&text).unwrap(), pts);
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        use crate::interferometer::{fringe_trace, linspace, InterferometerConfig};
        use crate::scattering::{Drive, EmitterParams, Scatterer};
        let s = Scatterer::single(EmitterParams::isotropic(12.3, 3.9, 1.0).unwrap(), Drive::LinearResponse)
            .unwrap();
        let tr = fringe_trace(&InterferometerConfig::default(), &s, &linspace(-1.0, 1.0, 64), true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("on.csv");
        let written = write_trace(&path, &tr).unwrap();
        assert_eq!(written.len(), 2);
        let back = parse_trace_csv(&path).unwrap();
        assert_eq!(back, tr);
    }
}
