//! CSV and JSON result files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::{Calibration, RunConfig};
use super::ensemble::{CorrelationBin, EnsembleResult, FailedRealization, Stability};
use crate::error::{Error, Result};
use crate::observables::CollectiveFit;

pub const CURVES_FILE: &str = "curves.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REALIZATIONS_FILE: &str = "realizations.csv";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Pretty JSON with every float written by [`fmt_f64`].
struct FixedDigits(PrettyFormatter<'static>);

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with full-precision floats.
pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Serialize)]
struct Summary<'a> {
    software: &'static str,
    version: &'static str,
    seed: u64,
    fit: &'a Option<CollectiveFit<f64>>,
    stability: &'a Stability,
    calibration: &'a Calibration,
    correlation_area: f64,
    cross_superatom_correlation: &'a [CorrelationBin],
    undefined_pairs: usize,
    completed: usize,
    failed: &'a [FailedRealization],
    mean_atoms: f64,
    mean_flagged_groups: f64,
    max_norm_drift: f64,
    total_steps: usize,
    config: &'a RunConfig,
}

pub fn curves_csv(result: &EnsembleResult) -> String {
    let mut s = String::from("pulse_area,n_exc_mean,n_exc_stderr,variance_ratio_mean\n");
    for p in &result.curve {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(p.pulse_area),
            fmt_f64(p.n_exc_mean),
            fmt_f64(p.n_exc_stderr),
            fmt_opt(p.variance_ratio_mean)
        );
    }
    s
}

pub fn correlation_csv(bins: &[CorrelationBin]) -> String {
    let mut s = String::from("distance_um,c_mean,c_stderr,n_pairs\n");
    for b in bins {
        let _ = writeln!(s, "{},{},{},{}", fmt_f64(b.distance_um), fmt_f64(b.c_mean), fmt_f64(b.c_stderr), b.n_pairs);
    }
    s
}

/// Long format: one row per realization and scan point.
pub fn realizations_csv(result: &EnsembleResult) -> Option<String> {
    let curves = result.realizations.as_ref()?;
    let mut s = String::from("realization,n_atoms,pulse_area,n_exc,variance_ratio\n");
    for c in curves {
        for (k, p) in result.curve.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.index,
                c.n_atoms,
                fmt_f64(p.pulse_area),
                fmt_f64(c.n_exc[k]),
                fmt_opt(c.variance_ratio[k])
            );
        }
    }
    Some(s)
}

pub fn summary_json(result: &EnsembleResult) -> Result<String> {
    to_json(&Summary {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: result.config.seed,
        fit: &result.fit,
        stability: &result.stability,
        calibration: &result.calibration,
        correlation_area: result.correlation_area,
        cross_superatom_correlation: &result.cross_correlation,
        undefined_pairs: result.undefined_pairs,
        completed: result.completed,
        failed: &result.failed,
        mean_atoms: result.mean_atoms,
        mean_flagged_groups: result.mean_flagged_groups,
        max_norm_drift: result.max_norm_drift,
        total_steps: result.total_steps,
        config: &result.config,
    })
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

/// Writes the result files into `dir`, creating it if needed, and returns
/// their paths.
pub fn emit_results(result: &EnsembleResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.curve.is_empty() {
        return Err(Error::Config("scan grid is empty".into()));
    }
    // Render everything first so nothing is written on a serialization error.
    let mut files = vec![
        (CURVES_FILE, curves_csv(result)),
        (CORRELATION_FILE, correlation_csv(&result.correlation)),
        (SUMMARY_FILE, summary_json(result)?),
    ];
    if let Some(r) = realizations_csv(result) {
        files.push((REALIZATIONS_FILE, r));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    files.into_iter().map(|(name, text)| write(dir.join(name), &text)).collect()
}
