use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rekindle_core::Condition;
use worker_sim::{fuzz_scenarios, run_suite, write_report_csv, Scenario, SimError, SuiteConfig};

#[derive(Debug, Parser)]
#[command(name = "worker-sim", about = "Scripted workers against a virtual-clock rekindle service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play scenarios from a JSON file (one scenario or an array).
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the condition of every scenario.
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        suite: SuiteArgs,
    },
    /// Write random valid scenarios as a JSON array.
    Fuzz {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuzz and play in one step.
    Suite {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        suite: SuiteArgs,
    },
}

#[derive(Debug, clap::Args)]
struct SuiteArgs {
    /// Where session logs go.
    #[arg(long, default_value = "sim-data")]
    data_dir: PathBuf,
    /// Seed of the mock generator and encouragement picker.
    #[arg(long, default_value_t = 0)]
    generator_seed: u64,
    #[arg(long)]
    images: bool,
    #[arg(long)]
    outbox: Option<PathBuf>,
}

impl SuiteArgs {
    fn config(&self) -> SuiteConfig {
        SuiteConfig {
            data_dir: self.data_dir.clone(),
            generator_seed: self.generator_seed,
            images: self.images,
            outbox: self.outbox.clone(),
        }
    }
}

fn load(path: &Path) -> Result<Vec<Scenario>, SimError> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<Vec<Scenario>>(&text) {
        Ok(list) => Ok(list),
        Err(_) => Ok(vec![serde_json::from_str::<Scenario>(&text)?]),
    }
}

fn play(scenarios: &[Scenario], suite: &SuiteArgs, report: &Path) -> Result<(), SimError> {
    let outcomes = run_suite(scenarios, &suite.config())?;
    let reports: Vec<_> = outcomes.into_iter().map(|o| o.report).collect();
    write_report_csv(report, &reports)?;
    eprintln!("{} sessions, report written to {}", reports.len(), report.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            condition,
            report,
            suite,
        } => load(&scenario).and_then(|mut list| {
            if let Some(c) = condition {
                list.iter_mut().for_each(|s| s.condition = c);
            }
            play(&list, &suite, &report)
        }),
        Command::Fuzz { n, seed, out } => fuzz_scenarios(n, seed).and_then(|list| {
            fs::write(&out, serde_json::to_string_pretty(&list)?)?;
            Ok(())
        }),
        Command::Suite {
            n,
            seed,
            report,
            suite,
        } => fuzz_scenarios(n, seed).and_then(|list| play(&list, &suite, &report)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("worker-sim: {err}");
            ExitCode::FAILURE
        }
    }
}
