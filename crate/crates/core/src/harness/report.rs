//! Summary rows, CSV and manifest emission.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::stats::Wilson;

/// A Wilson interval wider than this is flagged as low-power.
pub const LOW_POWER_WIDTH: f64 = 0.2;

/// One (kind, N) row of `summary.csv`. `held` counts successes of the
/// kind's verdict and `violations` its hard failures; see the README for
/// what each kind counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub held: usize,
    pub premise_held: usize,
    pub frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub level: f64,
    pub violations: usize,
    pub errors: usize,
    pub low_power: bool,
    pub pass: bool,
    pub mean_threshold: f64,
    pub mean_sigma_hat: f64,
    pub mean_a1: f64,
    pub median_metric: f64,
}

/// Frequency of true verdicts with its 95% Wilson interval. Passes when
/// the lower Wilson bound of the failure rate is at most `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub wilson: Wilson,
    pub failure_lo: f64,
    pub low_power: bool,
    pub pass: bool,
}

pub fn coverage(verdicts: &[bool], rho: f64) -> Result<Coverage> {
    if verdicts.is_empty() {
        return Err(invalid("coverage of an empty verdict list"));
    }
    let held = verdicts.iter().filter(|v| **v).count();
    let wilson = Wilson::new(held, verdicts.len());
    let failure_lo = wilson.complement().lo;
    Ok(Coverage { wilson, failure_lo, low_power: wilson.hi - wilson.lo > LOW_POWER_WIDTH, pass: failure_lo <= rho })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes `rows` to `path` and returns the file's SHA-256.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<String> {
    let bytes = csv_bytes(rows)?;
    std::fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Long-format plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub code_version: String,
    pub parallel: bool,
    pub workers: usize,
    pub config: serde_json::Value,
    /// SHA-256 of each emitted file, keyed by path relative to the run.
    pub files: BTreeMap<String, String>,
    /// Experiment-level numbers not in the summary, such as fitted slopes.
    pub derived: BTreeMap<String, f64>,
    pub wall_seconds: BTreeMap<String, f64>,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_true_has_frequency_one() {
        let c = coverage(&[true; 40], 0.1).unwrap();
        assert_eq!(c.wilson.frequency, 1.0);
        assert!(c.pass);
    }

    #[test]
    fn wilson_at_450_of_500() {
        let mut v = vec![true; 450];
        v.extend([false; 50]);
        let c = coverage(&v, 0.1).unwrap();
        assert_eq!(c.wilson.frequency, 0.9);
        // Independent evaluation of the score interval.
        let (n, p, z) = (500.0f64, 0.9f64, 1.959963984540054f64);
        let centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / (1.0 + z * z / n);
        assert!((c.wilson.lo - (centre - half)).abs() < 1e-12);
        assert!((c.wilson.lo - 0.871).abs() < 1e-3 && (c.wilson.hi - 0.923).abs() < 1e-3);
        assert!(c.pass && !c.low_power);
    }

    #[test]
    fn single_verdict_is_low_power() {
        assert!(coverage(&[true], 0.1).unwrap().low_power);
        assert!(coverage(&[], 0.1).is_err());
    }

    #[test]
    fn failing_coverage() {
        let mut v = vec![true; 300];
        v.extend([false; 200]);
        assert!(!coverage(&v, 0.1).unwrap().pass);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let rows = vec![PlotPoint { x: 0.1 + 0.2, y: std::f64::consts::PI / 3.0, series: "a".into() }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let sha = write_csv(&p, &rows).unwrap();
        let back: Vec<PlotPoint> = read_csv(&p).unwrap();
        assert_eq!(back, rows);
        assert_eq!(sha, sha256_hex(&csv_bytes(&back).unwrap()));
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
