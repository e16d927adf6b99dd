//! Command-line front end for running and inspecting streaming experiments.
//!
//! Usage:
//!   radae run --config desk.cfg --seed 1,2,3 --policy sdae,midae,radae --out runs/trace.csv
//!   radae validate --config desk.cfg
//!   radae replay runs/trace_radae_s1.csv --last 50
//!   radae export-stream --config desk.cfg --seed 1 --out stream.bin

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use radae::config::{ExperimentConfig, Policy};
use radae::harness::{prepare, run_policy};
use radae::stream::save_stream;
use radae::trace::{load_trace, save_trace, Summary};

#[derive(Debug, Parser)]
#[command(name = "radae", version, about = "Online structure-adapting denoising autoencoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more experiments and write their traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seeds to run; repeat the flag or separate with commas.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        /// Policies to run (sdae, midae, radae); repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        policy: Vec<Policy>,
        /// Trace path. With several runs, `_<policy>_s<seed>` is added to the file stem.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary window in batches (defaults to harness.summary_last).
        #[arg(long)]
        last: Option<usize>,
    },
    /// Parse and validate a config, printing the fully resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute summary statistics from a trace file.
    Replay {
        trace: PathBuf,
        #[arg(long, default_value_t = 250)]
        last: usize,
    },
    /// Build the stream for a seed and save it in the binary cache format.
    ExportStream {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn trace_path(base: &Path, policy: Policy, seed: u64, multiple: bool) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}_{policy}_s{seed}{ext}"))
}

fn run(config: &Path, seeds: Vec<u64>, policies: Vec<Policy>, out: Option<PathBuf>, last: Option<usize>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seeds = if seeds.is_empty() { vec![cfg.harness.seed] } else { seeds };
    let policies = if policies.is_empty() { vec![cfg.harness.policy] } else { policies };
    let out = out.or_else(|| cfg.harness.out.clone());
    let last = last.unwrap_or(cfg.harness.summary_last);
    let multiple = seeds.len() * policies.len() > 1;

    let results: Vec<Result<(u64, Policy, Summary)>> = seeds
        .par_iter()
        .flat_map_iter(|&seed| {
            let prepared = prepare(&cfg, seed).with_context(|| format!("preparing seed {seed}"));
            let out = out.clone();
            let cfg = &cfg;
            policies.iter().map(move |&policy| {
                let prepared = prepared.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))?;
                let records = run_policy(cfg, prepared, policy, seed).with_context(|| format!("running {policy} with seed {seed}"))?;
                if let Some(base) = &out {
                    let path = trace_path(base, policy, seed, multiple);
                    save_trace(&path, &records).with_context(|| format!("writing {}", path.display()))?;
                    log::info!("wrote {}", path.display());
                }
                Ok((seed, policy, Summary::from_records(&records, last)))
            })
        })
        .collect();

    let mut first_err = None;
    for r in results {
        match r {
            Ok((seed, policy, summary)) => println!("{policy} seed {seed}: {summary}"),
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            policy,
            out,
            last,
        } => run(&config, seed, policy, out, last),
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.render());
            Ok(())
        }
        Command::Replay { trace, last } => {
            let records = load_trace(&trace).with_context(|| format!("reading {}", trace.display()))?;
            println!("{}", Summary::from_records(&records, last));
            Ok(())
        }
        Command::ExportStream { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prepared = prepare(&cfg, seed.unwrap_or(cfg.harness.seed))?;
            let batches: Vec<_> = prepared.stream.iter().map(|b| (**b).clone()).collect();
            save_stream(&out, &batches)?;
            println!("wrote {} batches to {}", batches.len(), out.display());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config_error = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<radae::Error>(),
            Some(radae::Error::Config { .. } | radae::Error::InvalidConfig(_))
        )
    });
    if config_error {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
