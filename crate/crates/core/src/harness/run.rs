//! Running a config end to end and emitting its report files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{ExperimentConfig, ExperimentKind};
use super::coverage::{run_coverage, summarize_coverage, CoverageTrial};
use super::report::{coverage, csv_bytes, sha256_hex, write_csv, Manifest, PlotPoint, SummaryRow};
use super::soundness::{run_soundness, summarize_soundness, SoundnessTrial};
use crate::concentration::{concentration_suite, BoundCheck};
use crate::error::Result;
use crate::lasso::{persistence_experiment, LassoTrial};
use crate::parallel::{is_parallel, with_workers};
use crate::stats::{loglog_slope, mean, median};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Trial rows of any experiment kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Trials {
    Coverage(Vec<CoverageTrial>),
    Soundness(Vec<SoundnessTrial>),
    Concentration(Vec<BoundCheck>),
    Lasso(Vec<LassoTrial>),
}

impl Trials {
    pub fn len(&self) -> usize {
        match self {
            Trials::Coverage(r) => r.len(),
            Trials::Soundness(r) => r.len(),
            Trials::Concentration(r) => r.len(),
            Trials::Lasso(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn csv(&self) -> Result<Vec<u8>> {
        match self {
            Trials::Coverage(r) => csv_bytes(r),
            Trials::Soundness(r) => csv_bytes(r),
            Trials::Concentration(r) => csv_bytes(r),
            Trials::Lasso(r) => csv_bytes(r),
        }
    }

    /// Parses a trials file written for `kind`.
    pub fn read(kind: ExperimentKind, path: &Path) -> Result<Self> {
        use super::report::read_csv;
        Ok(match kind {
            k if k.is_coverage() => Trials::Coverage(read_csv(path)?),
            ExperimentKind::PerturbationSoundness => Trials::Soundness(read_csv(path)?),
            ExperimentKind::ConcentrationSuite => Trials::Concentration(read_csv(path)?),
            _ => Trials::Lasso(read_csv(path)?),
        })
    }
}

/// Summary rows and derived numbers, a pure function of the trial rows.
pub fn summarize(trials: &Trials, level: f64) -> Result<(Vec<SummaryRow>, BTreeMap<String, f64>)> {
    let mut derived = BTreeMap::new();
    let rows = match trials {
        Trials::Coverage(r) => summarize_coverage(r, level)?,
        Trials::Soundness(r) => summarize_soundness(r),
        Trials::Concentration(r) => summarize_concentration(r),
        Trials::Lasso(r) => {
            let rows = summarize_lasso(r, level)?;
            let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let meds: Vec<f64> = rows.iter().map(|r| r.median_metric).collect();
            if rows.len() >= 2 && meds.iter().all(|m| *m > 0.0) {
                derived.insert("excess_risk_loglog_slope".into(), loglog_slope(&ns, &meds));
            }
            rows
        }
    };
    Ok((rows, derived))
}

/// One row per (family, N): `held` counts passing cells and `violations`
/// the cells whose empirical tail exceeds the claim beyond Wilson slack.
pub fn summarize_concentration(rows: &[BoundCheck]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.family.name().to_string(), r.n);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(family, n)| {
            let batch: Vec<&BoundCheck> = rows.iter().filter(|r| r.family.name() == family && r.n == n).collect();
            let held = batch.iter().filter(|r| r.passes).count();
            SummaryRow {
                kind: format!("concentration:{family}"),
                n,
                trials: batch.len(),
                held,
                premise_held: batch.len(),
                frequency: held as f64 / batch.len() as f64,
                wilson_lo: f64::NAN,
                wilson_hi: f64::NAN,
                level: 0.0,
                violations: batch.len() - held,
                errors: 0,
                low_power: false,
                pass: held == batch.len(),
                mean_threshold: mean(&batch.iter().map(|r| r.mean_threshold).collect::<Vec<_>>()),
                mean_sigma_hat: f64::NAN,
                mean_a1: f64::NAN,
                median_metric: median(&batch.iter().map(|r| r.frequency).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// One row per N. `held` counts converged trials with a feasible x̂ and
/// `premise_held` trials where all four events held; the row passes when
/// the Wilson lower bound of the infeasibility rate is at most δ and no
/// lemma check failed. `errors` counts non-converged solves.
pub fn summarize_lasso(rows: &[LassoTrial], delta: f64) -> Result<Vec<SummaryRow>> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let batch: Vec<&LassoTrial> = rows.iter().filter(|r| r.n == n).collect();
            let conv: Vec<&LassoTrial> = batch.iter().copied().filter(|r| r.converged).collect();
            let c = coverage(&conv.iter().map(|r| r.feasible_ok).collect::<Vec<_>>(), delta)?;
            let violations: usize = batch.iter().map(|r| r.lemma_violations).sum();
            Ok(SummaryRow {
                kind: "lasso-persistence".into(),
                n,
                trials: batch.len(),
                held: c.wilson.successes,
                premise_held: batch.iter().filter(|r| r.norm_ok && r.diag_ok && r.grad_ok && r.quad_ok).count(),
                frequency: c.wilson.frequency,
                wilson_lo: c.wilson.lo,
                wilson_hi: c.wilson.hi,
                level: delta,
                violations,
                errors: batch.len() - conv.len(),
                low_power: c.low_power,
                pass: c.pass && violations == 0,
                mean_threshold: mean(&batch.iter().map(|r| r.alpha).collect::<Vec<_>>()),
                mean_sigma_hat: f64::NAN,
                mean_a1: f64::NAN,
                median_metric: median(&conv.iter().map(|r| r.excess_risk).collect::<Vec<_>>()),
            })
        })
        .collect()
}

fn plot_points(kind: ExperimentKind, rows: &[SummaryRow]) -> Vec<PlotPoint> {
    let y = |r: &SummaryRow| if kind == ExperimentKind::LassoPersistence { r.median_metric } else { r.frequency };
    rows.iter().filter(|r| r.n > 0).map(|r| PlotPoint { x: r.n as f64, y: y(r), series: r.kind.clone() }).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub trials: Trials,
    pub summary: Vec<SummaryRow>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.manifest.pass
    }
}

/// Executes the trials of `cfg` on a pool of `cfg.workers` threads.
pub fn execute(cfg: &ExperimentConfig, wall: &mut BTreeMap<String, f64>) -> Result<(Trials, BTreeMap<String, f64>)> {
    let start = Instant::now();
    let mut extra = BTreeMap::new();
    let trials = with_workers(cfg.workers, || -> Result<Trials> {
        Ok(match cfg.kind {
            k if k.is_coverage() => Trials::Coverage(run_coverage(cfg)?),
            ExperimentKind::PerturbationSoundness => Trials::Soundness(run_soundness(cfg)),
            ExperimentKind::ConcentrationSuite => {
                let mut rows = Vec::new();
                for &n in &cfg.n_schedule {
                    rows.extend(concentration_suite(&cfg.suite(n))?);
                }
                Trials::Concentration(rows)
            }
            _ => {
                let rep = persistence_experiment(&cfg.persistence())?;
                let c = &rep.calibration;
                extra.insert("c0".into(), c.c0);
                extra.insert("c2".into(), c.c2);
                extra.insert("c3".into(), c.c3);
                extra.insert("phi".into(), c.phi);
                extra.insert("small_ball_p".into(), c.small_ball.p_hat);
                extra.insert("min_sample_size".into(), rep.min_sample_size);
                Trials::Lasso(rep.trials)
            }
        })
    })?;
    wall.insert("trials".into(), start.elapsed().as_secs_f64());
    Ok((trials, extra))
}

/// Runs `cfg` and writes trials, summary, plot data and manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(dir.join("plotdata"))?;
    let mut wall = BTreeMap::new();
    let start = Instant::now();
    let (trials, extra) = execute(cfg, &mut wall)?;
    let bytes = trials.csv()?;
    std::fs::write(dir.join(TRIALS_FILE), &bytes)?;
    // The summary is computed from the file just written, as the verifier does.
    let reread = Trials::read(cfg.kind, &dir.join(TRIALS_FILE))?;
    let (summary, mut derived) = summarize(&reread, cfg.rho)?;
    derived.extend(extra);
    let mut files = BTreeMap::new();
    files.insert(TRIALS_FILE.to_string(), sha256_hex(&bytes));
    files.insert(SUMMARY_FILE.to_string(), write_csv(&dir.join(SUMMARY_FILE), &summary)?);
    let plot = format!("plotdata/{}.csv", cfg.kind.name());
    files.insert(plot.clone(), write_csv(&dir.join(&plot), &plot_points(cfg.kind, &summary))?);
    wall.insert("total".into(), start.elapsed().as_secs_f64());
    let manifest = Manifest {
        schema_version: super::config::CONFIG_SCHEMA_VERSION,
        kind: cfg.kind.name().into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        parallel: is_parallel(),
        workers: cfg.workers,
        config: serde_json::to_value(cfg)?,
        files,
        derived,
        wall_seconds: wall,
        pass: summary.iter().all(|r| r.pass),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunOutcome { dir, trials: reread, summary, manifest })
}

pub fn run_config_file(path: &Path) -> Result<RunOutcome> {
    run_experiment(&ExperimentConfig::load(path)?)
}
