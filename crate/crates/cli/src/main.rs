//! `afmc` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use afmc_core::experiment::{emit_summary, load_config, load_corpus, run_experiment};
use afmc_core::selftest::run_selftest;
use afmc_core::synth::{generate, SynthConfig};
use afmc_core::Scheme;

#[derive(Parser)]
#[command(name = "afmc", version, about = "Mobility-aware asynchronous FL for vehicular edge caching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sweep and write the CSV summaries.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated scheme names.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        capacities: Option<Vec<usize>>,
        /// Vehicle densities in vehicles/km.
        #[arg(long, value_delimiter = ',')]
        densities: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in oracle and property checks.
    Selftest,
    /// Write a synthetic MovieLens-format corpus (ratings.dat, users.dat).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON file with generator settings; defaults mimic MovieLens-1M.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            schemes,
            capacities,
            densities,
            repetitions,
        } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(names) = schemes {
                cfg.schemes = names.iter().map(|s| s.parse::<Scheme>()).collect::<Result<_, _>>()?;
            }
            if let Some(c) = capacities {
                cfg.capacities = c;
            }
            if let Some(d) = densities {
                cfg.densities = d;
            }
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            cfg.validate()?;
            let corpus = load_corpus(&cfg)?;
            info!(
                "{} users, {} contents; {} schemes x {} capacities x {} densities x {} repetitions",
                corpus.num_users(),
                corpus.catalog_size(),
                cfg.schemes.len(),
                cfg.capacities.len(),
                cfg.densities.len(),
                cfg.repetitions
            );
            let output = run_experiment(&cfg, &corpus)?;
            emit_summary(&output, &cfg.out_dir)?;
            println!(
                "wrote {} rows ({} failed cells) to {}",
                output.rows.len(),
                output.failures.len(),
                cfg.out_dir.display()
            );
            if output.rows.is_empty() {
                bail!("every cell failed; see failures.csv");
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config).with_context(|| format!("validating {}", config.display()))?;
            println!(
                "ok: {} schemes, capacities {:?}, densities {:?}, {} repetitions, seed {}",
                cfg.schemes.len(),
                cfg.capacities,
                cfg.densities,
                cfg.repetitions,
                cfg.seed
            );
            Ok(())
        }
        Command::Selftest => {
            let checks = run_selftest();
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                bail!("{failed} of {} self-checks failed", checks.len());
            }
            Ok(())
        }
        Command::Synth { out, config, seed } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let corpus = generate(&cfg)?;
            corpus.write(&out, cfg.seed)?;
            println!(
                "wrote {} users and {} ratings to {}",
                corpus.profiles.len(),
                corpus.ratings.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
