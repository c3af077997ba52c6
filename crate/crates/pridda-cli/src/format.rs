//! Deterministic text formats: 17-significant-digit floats, key=value
//! reports, the reference-solution file, and CSV traces (comma separators,
//! '.' decimal point, LF endings, mandatory header).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pridda::engine::{Reference, RunTrace};
use pridda::metrics::AggregatedRow;

use crate::error::{CliError, Result};

/// 17 significant digits, round-trip exact for f64.
pub fn float17(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v }; // normalize -0.0
    format!("{v:.16e}")
}

/// Parses a float written by [`float17`] (plain f64 parsing).
pub fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("invalid float {s:?}")))
}

/// The per-seed trace CSV.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::from(
        "t,subopt_ergodic_mean_node,consensus_err,eps_hat,thm2_envelope,lemma4_envelope\n",
    );
    for row in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.t,
            float17(row.subopt_mean_ergodic),
            float17(row.consensus_instant),
            float17(row.eps_hat),
            float17(row.thm2_envelope),
            float17(row.lemma4_envelope),
        );
    }
    out
}

/// The seed-aggregated CSV (mean and standard error per row).
pub fn aggregate_csv(rows: &[AggregatedRow]) -> String {
    let mut out = String::from(
        "t,subopt_mean,subopt_se,consensus_mean,consensus_se,eps_hat,thm2_envelope,lemma4_envelope\n",
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.t,
            float17(row.subopt_mean_ergodic.mean),
            float17(row.subopt_mean_ergodic.se),
            float17(row.consensus_instant.mean),
            float17(row.consensus_instant.se),
            float17(row.eps_hat),
            float17(row.thm2_envelope),
            float17(row.lemma4_envelope),
        );
    }
    out
}

/// Serializes the reference solution as key=value lines.
pub fn reference_file(
    reference: &Reference,
    iterations: u64,
    converged: bool,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dimension={}", reference.x_star.len());
    let _ = writeln!(out, "f_star={}", float17(reference.f_star));
    let _ = writeln!(out, "iterations={iterations}");
    let _ = writeln!(out, "converged={converged}");
    let xs: Vec<String> = reference.x_star.iter().map(|v| float17(*v)).collect();
    let _ = writeln!(out, "x={}", xs.join(","));
    out
}

/// Reads a reference file back.
pub fn read_reference(path: &Path) -> Result<Reference> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read reference file {path:?}: {e}")))?;
    let mut dimension: Option<usize> = None;
    let mut f_star: Option<f64> = None;
    let mut x_star: Option<Vec<f64>> = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("malformed reference line {line:?}")));
        };
        match key {
            "dimension" => {
                dimension = Some(value.trim().parse().map_err(|_| {
                    CliError::Config(format!("invalid reference dimension {value:?}"))
                })?)
            }
            "f_star" => f_star = Some(parse_float(value)?),
            "x" => {
                x_star = Some(
                    value
                        .split(',')
                        .map(parse_float)
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            "iterations" | "converged" => {}
            other => {
                return Err(CliError::Config(format!("unknown reference key {other:?}")));
            }
        }
    }
    let (Some(dimension), Some(f_star), Some(x_star)) = (dimension, f_star, x_star) else {
        return Err(CliError::Config("reference file is missing required keys".into()));
    };
    if x_star.len() != dimension {
        return Err(CliError::Config(format!(
            "reference dimension {dimension} does not match vector length {}",
            x_star.len()
        )));
    }
    Ok(Reference { x_star, f_star })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {parent:?}: {e}")))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {path:?}: {e}")))
}
