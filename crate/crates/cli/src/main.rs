//! `agd`: runs the toy, logistic-regression and oracle experiments.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical failure
//! during a run or a failing oracle property.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use agd_core::harness::config::{parse_override, parse_pairs, Experiment, ExperimentConfig};
use agd_core::harness::experiments::{run_blr_experiment, run_toy_experiment, ExperimentReport};
use agd_core::harness::oracle::run_oracle_suite;
use agd_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agd", version, about = "Alpha-divergence descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian-mixture toy problem.
    Toy(RunArgs),
    /// Bayesian logistic regression on a libsvm dataset.
    Blr(RunArgs),
    /// Property suite; writes oracle_report.tsv.
    Oracle(RunArgs),
    /// Resolves and checks a configuration without running it.
    ValidateConfig {
        #[command(flatten)]
        run: RunArgs,
        /// Experiment the configuration is for; read from the file when omitted.
        #[arg(long)]
        experiment: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods such as `power:0.5,ais`.
    #[arg(long)]
    method: Option<String>,
    /// Divergence order given to every method.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
    /// `key=value`, applied after the file and the other flags.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use every dataset row instead of the default subsample.
    #[arg(long)]
    full: bool,
    /// Report admissibility violations as warnings.
    #[arg(long)]
    warn_only: bool,
}

impl RunArgs {
    fn resolve(
        &self,
        experiment: Experiment,
        file_text: Option<&str>,
    ) -> Result<ExperimentConfig, Error> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(seed) = self.seed {
            pairs.push(("master_seed".into(), seed.to_string()));
        }
        if let Some(out) = &self.out {
            pairs.push(("output_dir".into(), out.display().to_string()));
        }
        if let Some(alpha) = self.alpha {
            pairs.push(("alpha".into(), alpha.to_string()));
        }
        if let Some(m) = &self.method {
            pairs.push(("methods".into(), m.clone()));
        }
        if let Some(eta0) = self.eta0 {
            pairs.push(("eta0".into(), eta0.to_string()));
        }
        if self.full {
            pairs.push(("subsample".into(), "0".into()));
        }
        if self.warn_only {
            pairs.push(("warn_only".into(), "true".into()));
        }
        for o in &self.overrides {
            pairs.push(parse_override(o)?);
        }
        let mut config = ExperimentConfig::from_sources(experiment, file_text, &pairs)?;
        if let Some(alpha) = self.alpha {
            for m in &mut config.methods {
                m.alpha = alpha;
            }
        }
        Ok(config)
    }

    fn file_text(&self) -> Result<Option<String>, Error> {
        self.config
            .as_ref()
            .map(|p| fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display()))))
            .transpose()
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn print_report(report: &ExperimentReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> ExitCode {
    let config = match args
        .file_text()
        .and_then(|t| args.resolve(experiment, t.as_deref()))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match experiment {
        Experiment::Toy => run_toy_experiment(&config),
        Experiment::Blr => run_blr_experiment(&config),
        Experiment::OracleSuite => {
            return match run_oracle_suite(&config) {
                Ok((report, path)) => {
                    print!("{}", report.to_tsv());
                    println!("wrote {}", path.display());
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
    };
    match result {
        Ok(report) => {
            print_report(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn validate(args: &RunArgs, experiment: Option<&str>) -> ExitCode {
    let outcome = (|| -> Result<(ExperimentConfig, Vec<String>), Error> {
        let text = args.file_text()?;
        let from_file = match &text {
            Some(t) => parse_pairs(t)?
                .into_iter()
                .find(|(k, _)| k == "experiment")
                .map(|(_, v)| v),
            None => None,
        };
        let name = experiment
            .map(str::to_string)
            .or(from_file)
            .unwrap_or_else(|| "toy".into());
        let config = args.resolve(name.parse()?, text.as_deref())?;
        let warnings = config.check()?;
        Ok((config, warnings))
    })();
    match outcome {
        Ok((config, warnings)) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", config.canonical());
            println!("# hash = {}", config.hash());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Toy(args) => run_experiment(Experiment::Toy, args),
        Command::Blr(args) => run_experiment(Experiment::Blr, args),
        Command::Oracle(args) => run_experiment(Experiment::OracleSuite, args),
        Command::ValidateConfig { run, experiment } => validate(run, experiment.as_deref()),
    }
}
