use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use swarm_oracle::experiments::{emit, run_batch, ExperimentConfig, Job, RunOutput, SweepMatrix};
use swarm_oracle::ledger::{read_chain, replay};

#[derive(Parser)]
#[command(name = "swarm-oracle", version, about = "Swarm oracle experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment for each of its seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run this seed only, instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay an exported chain and print the resulting state digest.
    Replay {
        #[arg(long)]
        chain: PathBuf,
        /// Fail unless the replayed digest equals this one.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Run every point of a parameter grid.
    Sweep {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            cfg.validate().with_context(|| format!("invalid config {}", config.display()))?;
            execute(&Job::expand(&[cfg]), &out)
        }
        Command::Sweep { matrix, out } => {
            let configs = SweepMatrix::load(&matrix)?
                .expand()
                .with_context(|| format!("invalid matrix {}", matrix.display()))?;
            execute(&Job::expand(&configs), &out)
        }
        Command::Replay { chain, expect } => {
            let file = std::fs::File::open(&chain).with_context(|| format!("opening {}", chain.display()))?;
            let (genesis, blocks) = read_chain(BufReader::new(file))?;
            let state = replay(&genesis, &blocks)?;
            let digest = state.state_digest().to_string();
            let txs: usize = blocks.iter().map(|b| b.txs.len()).sum();
            println!("blocks       {}", blocks.len());
            println!("transactions {txs}");
            println!("settlements  {}", state.settlements());
            println!("agreements   {}", state.consensus().len());
            println!("supply       {}", state.supply());
            println!("conserved    {}", state.is_conserved());
            println!("digest       {digest}");
            if let Some(e) = expect {
                if e != digest {
                    bail!("digest mismatch: expected {e}, replayed {digest}");
                }
            }
            Ok(())
        }
    }
}

fn execute(jobs: &[Job], out: &Path) -> anyhow::Result<()> {
    let mut runs: Vec<RunOutput> = Vec::with_capacity(jobs.len());
    for (job, res) in jobs.iter().zip(run_batch(jobs)) {
        let run = res.with_context(|| format!("{} seed {}", job.config.name, job.seed))?;
        let m = &run.metrics;
        println!(
            "{} seed={} stop={} t={:.1}s settlements={} accepted={} first_error={} violated_safety={} digest={}",
            run.config.name,
            run.seed,
            m.stop_reason.as_deref().unwrap_or("-"),
            m.end_time,
            m.agreements.len(),
            m.accepted().count(),
            m.first_error().map_or("-".into(), |e| format!("{e:.2}")),
            m.violated_safety,
            &run.digest[..16],
        );
        runs.push(run);
    }
    emit(&runs, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} run(s) to {}", runs.len(), out.display());
    Ok(())
}
