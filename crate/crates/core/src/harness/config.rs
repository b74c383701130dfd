//! Experiment configuration: JSON with a schema version, validated with
//! line-anchored messages.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concentration::SuiteConfig;
use crate::error::{Error, Result};
use crate::lasso::PersistenceConfig;
use crate::problem::descriptor::InstanceDescriptor;
use crate::problem::Instance;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FixedSetCoverage,
    ExteriorMrCoverage,
    InteriorScqCoverage,
    InteriorSolutionCoverage,
    PerturbationSoundness,
    ConcentrationSuite,
    LassoPersistence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FixedSetCoverage => "fixed-set-coverage",
            ExperimentKind::ExteriorMrCoverage => "exterior-mr-coverage",
            ExperimentKind::InteriorScqCoverage => "interior-scq-coverage",
            ExperimentKind::InteriorSolutionCoverage => "interior-solution-coverage",
            ExperimentKind::PerturbationSoundness => "perturbation-soundness",
            ExperimentKind::ConcentrationSuite => "concentration-suite",
            ExperimentKind::LassoPersistence => "lasso-persistence",
        }
    }

    pub fn is_coverage(self) -> bool {
        matches!(
            self,
            ExperimentKind::FixedSetCoverage
                | ExperimentKind::ExteriorMrCoverage
                | ExperimentKind::InteriorScqCoverage
                | ExperimentKind::InteriorSolutionCoverage
        )
    }
}

/// How ε̂ is chosen in coverage experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EpsPolicy {
    /// ε̂ set to `safety` times the data-dependent threshold of the premise.
    PaperFormula {
        #[serde(default = "default_safety")]
        safety: f64,
    },
    /// The relaxation ε̂ used as given.
    Fixed { eps_hat: f64 },
}

impl Default for EpsPolicy {
    fn default() -> Self {
        EpsPolicy::PaperFormula { safety: default_safety() }
    }
}

fn default_safety() -> f64 {
    1.05
}

fn default_rho() -> f64 {
    0.1
}

fn default_workers() -> usize {
    1
}

fn default_budget() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    /// Instance descriptor, relative to the config file.
    #[serde(default)]
    pub instance: Option<PathBuf>,
    #[serde(default)]
    pub n_schedule: Vec<usize>,
    /// ρ for coverage, δ for the LASSO experiment.
    #[serde(default = "default_rho", alias = "delta")]
    pub rho: f64,
    /// ε: the floor of ε̂ in the exterior theorems, the accuracy in the
    /// interior ones.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_policy: EpsPolicy,
    pub trials: usize,
    pub seed: u64,
    /// Pool size; 0 uses the global default.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory, relative to the config file.
    pub output: PathBuf,
    /// Evaluation budget of each sup or inclusion search.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub lasso: Option<PersistenceConfig>,
    #[serde(default)]
    pub concentration: Option<SuiteConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base: PathBuf,
}

/// 1-based line of the first occurrence of `"key"`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let pat = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&pat)).map_or(1, |i| i + 1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_at(&text, &path.display().to_string(), base)
    }

    /// Parses and validates; errors read `origin:line:column: message`.
    pub fn parse_at(text: &str, origin: &str, base: PathBuf) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        cfg.base = base;
        if let Err((key, msg)) = cfg.check() {
            return Err(Error::Config(format!("{origin}:{}: {key}: {msg}", line_of(text, key))));
        }
        Ok(cfg)
    }

    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.trials == 0 {
            return Err(("trials", "must be positive".into()));
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(("n_schedule", "must be strictly increasing".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if self.budget < crate::perturbation::MIN_BUDGET {
            return Err(("budget", format!("must be at least {}", crate::perturbation::MIN_BUDGET)));
        }
        match self.eps_policy {
            EpsPolicy::PaperFormula { safety } if !(safety >= 1.0) => {
                return Err(("safety", format!("must be at least 1, got {safety}")));
            }
            EpsPolicy::Fixed { eps_hat } if !eps_hat.is_finite() => return Err(("eps_hat", "must be finite".into())),
            _ => {}
        }
        let kind = self.kind;
        if kind.is_coverage() {
            if self.trials < 100 {
                return Err(("trials", format!("coverage needs at least 100 trials, got {}", self.trials)));
            }
            if self.instance.is_none() {
                return Err(("kind", "coverage experiments need an instance descriptor".into()));
            }
            if self.n_schedule.is_empty() || self.n_schedule[0] < 2 {
                return Err(("n_schedule", "needs at least one N ≥ 2".into()));
            }
            match self.eps {
                Some(e) if e > 0.0 => {}
                _ => return Err(("kind", "coverage experiments need a positive eps".into())),
            }
            if let EpsPolicy::Fixed { eps_hat } = self.eps_policy {
                let interior = matches!(kind, ExperimentKind::InteriorScqCoverage | ExperimentKind::InteriorSolutionCoverage);
                let eps = self.eps.unwrap_or(0.0);
                if interior && !(eps_hat <= 0.0 && eps_hat >= -eps) {
                    return Err(("eps_hat", format!("interior experiments need -eps <= eps_hat <= 0, got {eps_hat}")));
                }
                if !interior && !(eps_hat > 0.0) {
                    return Err(("eps_hat", format!("must be positive, got {eps_hat}")));
                }
            }
        }
        match kind {
            ExperimentKind::PerturbationSoundness if self.n_schedule.is_empty() || self.n_schedule[0] < 2 => {
                Err(("n_schedule", "needs at least one N ≥ 2".into()))
            }
            ExperimentKind::ConcentrationSuite => {
                if self.trials < 100 {
                    return Err(("trials", "the suite needs at least 100 replications".into()));
                }
                if self.n_schedule.is_empty() {
                    return Err(("n_schedule", "needs at least one N".into()));
                }
                Ok(())
            }
            ExperimentKind::LassoPersistence => self.persistence().validate().map_err(|e| ("lasso", e.to_string())),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn load_instance(&self) -> Result<Instance> {
        let path = self.instance.as_ref().ok_or(Error::Missing("instance descriptor"))?;
        let path = self.resolve(path);
        let d = InstanceDescriptor::load(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        d.build()
    }

    /// The LASSO block with the top-level schedule, trials, δ and seed.
    pub fn persistence(&self) -> PersistenceConfig {
        let mut p = self.lasso.clone().unwrap_or_default();
        if !self.n_schedule.is_empty() {
            p.n_schedule = self.n_schedule.clone();
        }
        p.trials = self.trials;
        p.delta = self.rho;
        p.seed = self.seed;
        p
    }

    /// The suite block at sample size `n`, with trials and seed.
    pub fn suite(&self, n: usize) -> SuiteConfig {
        let mut s = self.concentration.clone().unwrap_or_default();
        s.n = n;
        s.replications = self.trials;
        s.seed = self.seed;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
  "schema_version": 1,
  "kind": "fixed-set-coverage",
  "instance": "fixed.json",
  "n_schedule": [1000, 4000],
  "rho": 0.1,
  "eps": 0.1,
  "trials": 500,
  "seed": 7,
  "output": "out"
}"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse_at(text, "cfg.json", PathBuf::from("/base"))
    }

    #[test]
    fn parses_with_defaults() {
        let c = parse(GOOD).unwrap();
        assert_eq!(c.kind, ExperimentKind::FixedSetCoverage);
        assert_eq!(c.eps_policy, EpsPolicy::PaperFormula { safety: 1.05 });
        assert_eq!(c.workers, 1);
        assert_eq!(c.output_dir(), PathBuf::from("/base/out"));
    }

    #[test]
    fn zero_trials_rejected_with_line() {
        let bad = GOOD.replace("\"trials\": 500", "\"trials\": 0");
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("cfg.json:8: trials"), "{msg}");
    }

    #[test]
    fn coverage_needs_100_trials() {
        assert!(parse(&GOOD.replace("\"trials\": 500", "\"trials\": 99")).is_err());
    }

    #[test]
    fn schedule_must_increase() {
        let msg = parse(&GOOD.replace("[1000, 4000]", "[4000, 1000]")).unwrap_err().to_string();
        assert!(msg.contains(":5: n_schedule"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let msg = parse(&GOOD.replace("\"rho\": 0.1,", "\"rho\": ,")).unwrap_err().to_string();
        assert!(msg.starts_with("config error: cfg.json:6:"), "{msg}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse(&GOOD.replace("\"seed\": 7", "\"sede\": 7")).is_err());
    }

    #[test]
    fn interior_fixed_relaxation_range() {
        let t = GOOD.replace("fixed-set-coverage", "interior-scq-coverage");
        let ok = t.replace("\"eps\": 0.1,", "\"eps\": 0.1, \"eps_policy\": {\"policy\": \"fixed\", \"eps_hat\": -0.05},");
        assert!(parse(&ok).is_ok());
        let bad = t.replace("\"eps\": 0.1,", "\"eps\": 0.1, \"eps_policy\": {\"policy\": \"fixed\", \"eps_hat\": -0.5},");
        assert!(parse(&bad).is_err());
    }
}
