mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use experiments::{Context, EXPERIMENTS};
use output::{report_text, write_outcome, Assertion};

#[derive(Parser)]
#[command(name = "oscchain", version, about = "Finite-chain checks for weakly coupled anharmonic oscillators")]
struct Cli {
    /// TOML configuration; the shipped default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; each experiment writes to `<out>/<name>/`.
    #[arg(long, global = true, env = "OSCCHAIN_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Refuse any Hilbert space larger than this.
    #[arg(long, global = true)]
    max_dim: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Low-lying spectrum and Gibbs density diagnostics.
    Spectrum,
    /// Factorization of the boundary-perturbed Gibbs state.
    Gibbs,
    /// Trace sandwich bounds for product multiplication operators.
    Sandwich,
    /// Mehler, eigensum and Trotter kernel comparisons.
    Kernel,
    /// Commutator growth against the Lieb-Robinson envelope.
    Lr,
    /// Truncated Dyson series against the exact interaction-picture unitary.
    Dyson,
    /// KMS boundary condition and invariance residuals.
    Kms,
    /// Continuity moduli of momentum translations.
    Regularity,
    /// Relative-entropy uniqueness bound and its inequalities.
    Entropy,
    /// Resolvent algebra relation residuals.
    Resolvent,
    /// Every experiment above.
    All,
    /// Print the shipped default configuration.
    DefaultConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Gibbs => "gibbs",
            Command::Sandwich => "sandwich",
            Command::Kernel => "kernel",
            Command::Lr => "lr",
            Command::Dyson => "dyson",
            Command::Kms => "kms",
            Command::Regularity => "regularity",
            Command::Entropy => "entropy",
            Command::Resolvent => "resolvent",
            Command::All => "all",
            Command::DefaultConfig => "default-config",
        }
    }
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    experiment: &'a str,
    passed: bool,
    elapsed_seconds: f64,
    assertions: &'a [Assertion],
}

#[derive(Serialize)]
struct CombinedSummary<'a> {
    config_digest: &'a str,
    passed: bool,
    elapsed_seconds: f64,
    experiments: Vec<ExperimentSummary<'a>>,
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", config::DEFAULT_CONFIG);
        return Ok(true);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_config(),
    };
    let digest = cfg.digest();
    let ctx = Context::new(cfg, cli.max_dim);
    let names: Vec<&str> = match cli.command {
        Command::All => EXPERIMENTS.to_vec(),
        c => vec![c.name()],
    };

    let start = Instant::now();
    let mut results = Vec::new();
    for name in names {
        let t0 = Instant::now();
        let outcome = ctx.run(name).with_context(|| format!("experiment {name}"))?;
        let elapsed = t0.elapsed().as_secs_f64();
        write_outcome(&cli.out.join(name), &outcome, &digest, elapsed)?;
        print!("{}", report_text(&outcome, elapsed));
        results.push((outcome, elapsed));
    }
    let passed = results.iter().all(|(o, _)| o.passed());
    if let Command::All = cli.command {
        write_combined(&cli.out, &digest, &results, start.elapsed().as_secs_f64(), passed)?;
    }
    Ok(passed)
}

fn write_combined(out: &Path, digest: &str, results: &[(output::Outcome, f64)], elapsed: f64, passed: bool) -> Result<()> {
    let summary = CombinedSummary {
        config_digest: digest,
        passed,
        elapsed_seconds: elapsed,
        experiments: results
            .iter()
            .map(|(o, t)| ExperimentSummary { experiment: o.experiment, passed: o.passed(), elapsed_seconds: *t, assertions: &o.assertions })
            .collect(),
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let mut text: String = results.iter().map(|(o, t)| report_text(o, *t)).collect();
    text.push_str(&format!("== all [{}] ({elapsed:.1} s)\n", if passed { "PASS" } else { "FAIL" }));
    std::fs::write(out.join("report.txt"), text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("oscchain: one or more assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("oscchain: {e:#}");
            ExitCode::from(2)
        }
    }
}
