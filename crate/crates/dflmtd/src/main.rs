use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dflmtd::load_config;
use dflmtd::runner::{parse_topology, run_to_dir, sweep, Strategy, SweepGrid, SWEEP_SUMMARY_FILE};
use dflmtd_core::federation::{RunOptions, TopologyKind};

#[derive(Parser)]
#[command(
    name = "dflmtd",
    version,
    about = "Decentralized federated learning simulator with moving target defense"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Train nodes on all cores.
        #[arg(long)]
        parallel: bool,
    },
    /// Run a grid of PNR x strategy (x topology) cells.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        pnr: Vec<f64>,
        /// Defaults to fedavg and reactive_topology.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        #[arg(long, value_delimiter = ',', value_parser = parse_topology)]
        topologies: Vec<TopologyKind>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            parallel,
        } => {
            let loaded = load_config(&config)?;
            let mut cfg = loaded.config.clone();
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let run = run_to_dir(&loaded, &cfg, RunOptions { parallel }, &out)?;
            println!("final_f1 {:.6}", run.report.final_f1);
            if let Some(asr) = run.report.final_asr {
                println!("final_asr {asr:.6}");
            }
            println!("wrote {} and {}", run.rounds_csv.display(), run.summary_json.display());
        }
        Command::Sweep {
            config,
            pnr,
            strategies,
            topologies,
            out,
            seed,
            parallel,
        } => {
            let mut loaded = load_config(&config)?;
            if let Some(seed) = seed {
                loaded.config.seed = seed;
            }
            let strategies = if strategies.is_empty() {
                ["fedavg", "reactive_topology"]
                    .map(|s| s.parse().expect("known strategy"))
                    .to_vec()
            } else {
                strategies
            };
            let grid = SweepGrid {
                pnrs: pnr,
                strategies,
                topologies,
            };
            let rows = sweep(&loaded, &grid, RunOptions { parallel }, &out)?;
            for r in &rows {
                println!("{} f1 {:.4}", r.cell, r.final_f1);
            }
            println!("wrote {}", out.join(SWEEP_SUMMARY_FILE).display());
        }
    }
    Ok(())
}
