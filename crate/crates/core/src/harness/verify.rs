//! Recomputes a run's summary from its trials file and checks checksums.

use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{csv_bytes, sha256_hex, Manifest};
use super::run::{summarize, Trials, MANIFEST_FILE, SUMMARY_FILE, TRIALS_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub kind: String,
    pub trials: usize,
    pub summary_rows: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

pub fn verify_run(dir: &Path) -> Result<VerifyReport> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let cfg: ExperimentConfig = serde_json::from_value(manifest.config.clone())?;
    let kind: ExperimentKind = cfg.kind;
    if kind.name() != manifest.kind {
        return Err(Error::Config(format!("manifest kind {} disagrees with its config", manifest.kind)));
    }
    let mut problems = Vec::new();
    for (file, want) in &manifest.files {
        match std::fs::read(dir.join(file)) {
            Ok(bytes) if &sha256_hex(&bytes) == want => {}
            Ok(_) => problems.push(format!("{file}: checksum mismatch")),
            Err(e) => problems.push(format!("{file}: {e}")),
        }
    }
    let trials = Trials::read(kind, &dir.join(TRIALS_FILE))?;
    let (summary, derived) = summarize(&trials, cfg.rho)?;
    let recomputed = csv_bytes(&summary)?;
    let stored = std::fs::read(dir.join(SUMMARY_FILE))?;
    if recomputed != stored {
        problems.push(format!("{SUMMARY_FILE} differs from the summary recomputed from {TRIALS_FILE}"));
    }
    for (k, v) in &derived {
        match manifest.derived.get(k) {
            Some(m) if m.to_bits() == v.to_bits() => {}
            _ => problems.push(format!("derived value {k} does not match the trials")),
        }
    }
    if manifest.pass != summary.iter().all(|r| r.pass) {
        problems.push("manifest pass flag disagrees with the summary".into());
    }
    Ok(VerifyReport { kind: manifest.kind, trials: trials.len(), summary_rows: summary.len(), problems })
}
