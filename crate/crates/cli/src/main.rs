use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use heavysaa::concentration::{concentration_suite, BoundFamily, Generator, SuiteConfig};
use heavysaa::harness::{run_experiment, sample_size_table, verify_run, ExperimentConfig};
use heavysaa::problem::descriptor::InstanceDescriptor;
use heavysaa::Error;

/// Experiments on localized SAA deviation bounds under heavy tails.
#[derive(Parser)]
#[command(name = "heavysaa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write trials.csv, summary.csv and manifest.json.
    Run {
        config: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the sufficient sample size over grids of q, rho and eps.
    SampleSize {
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Instance descriptor (JSON).
        #[arg(long)]
        instance: PathBuf,
    },
    /// Recompute a run's summary from its trials file and check checksums.
    Verify { run_dir: PathBuf },
    /// Check one concentration bound against one generator by Monte Carlo.
    Bounds {
        /// panchenko, self-normalized, uniform-deviation, lower-tail or all.
        #[arg(long, default_value = "all")]
        family: String,
        /// pareto:<tail index> or student-t:<dof>.
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        replications: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

/// Why a command did not succeed.
enum Failure {
    Config(anyhow::Error),
    Acceptance(String),
    Other(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => Failure::Config(e.into()),
            _ => Failure::Other(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn parse_generator(s: &str) -> Result<Generator, Failure> {
    let bad = || Failure::Config(anyhow::anyhow!("generator must be pareto:<tail index> or student-t:<dof>, got {s}"));
    let (name, value) = s.split_once(':').ok_or_else(bad)?;
    let v: f64 = value.parse().map_err(|_| bad())?;
    match name {
        "pareto" => Ok(Generator::Pareto { tail_index: v }),
        "student-t" => Ok(Generator::StudentT { dof: v }),
        _ => Err(bad()),
    }
}

fn parse_family(s: &str) -> Result<Option<BoundFamily>, Failure> {
    if s == "all" {
        return Ok(None);
    }
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map(Some)
        .map_err(|_| Failure::Config(anyhow::anyhow!("unknown bound family {s}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, workers, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(o) = output {
                cfg.output = std::env::current_dir().context("current directory")?.join(o);
            }
            let out = run_experiment(&cfg)?;
            print!("{}", String::from_utf8_lossy(&std::fs::read(out.dir.join("summary.csv")).context("summary")?));
            eprintln!("wrote {}", out.dir.display());
            if !out.pass() {
                return Err(Failure::Acceptance("at least one summary row failed its acceptance rule".into()));
            }
        }
        Command::SampleSize { q, rho, eps, instance } => {
            let d = InstanceDescriptor::load(&instance).map_err(|e| Failure::Config(anyhow::anyhow!("{}: {e}", instance.display())))?;
            let rows = sample_size_table(&q, &rho, &eps, &d.build()?)?;
            print!("{}", String::from_utf8_lossy(&heavysaa::harness::report::csv_bytes(&rows)?));
        }
        Command::Verify { run_dir } => {
            let rep = verify_run(&run_dir)?;
            println!("{} trials, {} summary rows", rep.trials, rep.summary_rows);
            if !rep.ok() {
                return Err(Failure::Acceptance(rep.problems.join("\n")));
            }
            println!("verified");
        }
        Command::Bounds { family, generator, n, replications, seed } => {
            let family = parse_family(&family)?;
            let cfg = SuiteConfig { n, replications, seed, generators: vec![parse_generator(&generator)?], ..SuiteConfig::default() };
            let rows: Vec<_> = concentration_suite(&cfg)?.into_iter().filter(|r| family.is_none_or(|f| r.family == f)).collect();
            print!("{}", String::from_utf8_lossy(&heavysaa::harness::report::csv_bytes(&rows)?));
            if rows.iter().any(|r| !r.passes) {
                return Err(Failure::Acceptance("a bound was exceeded beyond Wilson slack".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
