use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sleeping_bandits::evaluation::Lemma;
use sleeping_bandits::experiment::{
    audit_report_text, dump_env, run_audit, run_experiment, sweep, AuditFile, ExperimentConfig, SweepAxis,
};
use sleeping_bandits::{Error, Result};

#[derive(Parser)]
#[command(name = "sleepbench", version, about = "Sleeping-bandit experiments and estimator audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write <id>.csv and <id>.meta.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Audit an availability estimator against its concentration bound.
    Audit {
        /// L1, L6 or L9; overrides the config's `lemma`.
        #[arg(long)]
        lemma: Option<Lemma>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Re-run an experiment for each value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// K, availability or T.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Write the loss matrix and availability sequence of one run.
    DumpEnv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config { path: field, message } => Error::Config {
            path: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    })?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn out_dir(out: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            parallel,
        } => {
            let config = load(&config, seed)?;
            let result = run_experiment(&config, parallel)?;
            let (csv, meta) = result.write(&out_dir(out, &config))?;
            println!("wrote {} and {}", csv.display(), meta.display());
        }
        Command::Audit {
            lemma,
            config,
            out,
            seed,
            parallel,
        } => {
            let file = match &config {
                Some(p) => AuditFile::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::Config {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?)?,
                None => AuditFile::default(),
            };
            let (audit, seed) = file.resolve(lemma, seed)?;
            let report = run_audit(&audit, seed, parallel)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("audit_{}.txt", report.lemma));
            std::fs::write(&path, audit_report_text(&report, seed))?;
            println!(
                "{}: {}/{} trials above bound {:.6} (fraction {:.4}, delta {}) -> {}",
                report.lemma,
                report.violations,
                report.trials,
                report.bound,
                report.violation_fraction,
                report.delta,
                if report.passed { "pass" } else { "fail" }
            );
            println!("wrote {}", path.display());
            if !report.passed {
                return Err(Error::AuditFailed {
                    violations: report.violations,
                    trials: report.trials,
                    delta: report.delta,
                });
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            seed,
            parallel,
        } => {
            let config = load(&config, seed)?;
            let result = sweep(&config, axis, &values, parallel)?;
            for point in &result.points {
                if let Err(e) = &point.outcome {
                    eprintln!("warning: {}={}: {}: {e}", axis.name(), point.value, e.kind());
                }
            }
            let path = result.write(&out_dir(out, &config))?;
            println!("wrote {}", path.display());
        }
        Command::DumpEnv { config, run, out, seed } => {
            let config = load(&config, seed)?;
            let (losses, avail) = dump_env(&config, run, &out_dir(out, &config))?;
            println!("wrote {} and {}", losses.display(), avail.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: usage: {}", message.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
