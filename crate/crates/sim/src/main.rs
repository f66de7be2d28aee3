use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkf_core::Policy;
use dkf_sim::error::exit;
use dkf_sim::experiment::{policy_sweep, scenario_for_trial, RunOptions};
use dkf_sim::output::{write_outputs, write_topology};
use dkf_sim::{load_config, selftest, ExperimentConfig, SimError};

#[derive(Parser)]
#[command(
    name = "dkf-sim",
    version,
    about = "Clustered diffusion Kalman filtering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials of one policy.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured policy.
        #[arg(long)]
        policy: Option<Policy>,
    },
    /// Run all trials of several policies on shared scenarios.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "uniform,metropolis,relvar,adaptive"
        )]
        policies: Vec<Policy>,
    },
    /// Write the network and partition of the first trial.
    Topology {
        #[command(flatten)]
        common: Common,
    },
    /// Check the filter against independent reference implementations.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config, or a run_meta.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Track the smallest covariance eigenvalue.
    #[arg(long)]
    track_psd: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.n_trials = trials;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            track_psd: self.track_psd,
        }
    }
}

fn run(cli: Cli) -> Result<i32, SimError> {
    match cli.command {
        Command::Run { common, policy } => {
            let mut cfg = common.config()?;
            if let Some(p) = policy {
                cfg.policy = p;
            }
            sweep(&cfg, &[cfg.policy], &common)
        }
        Command::Sweep { common, policies } => {
            let cfg = common.config()?;
            sweep(&cfg, &policies, &common)
        }
        Command::Topology { common } => {
            let cfg = common.config()?;
            let s = scenario_for_trial(&cfg, 0)?;
            create_dir(&common.out_dir)?;
            write_topology(
                &common.out_dir,
                "initial",
                &s.network,
                &s.network,
                &s.clusters,
            )?;
            println!(
                "{} nodes, {} links, cluster sizes {:?}",
                s.network.n_nodes(),
                s.network.edges().len(),
                (1..=s.clusters.count())
                    .map(|l| s.clusters.size(l))
                    .collect::<Vec<_>>()
            );
            Ok(exit::OK)
        }
        Command::Selftest { seed } => {
            let outcomes = selftest::run_all(seed);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.passed()) {
                exit::OK
            } else {
                exit::NUMERIC
            })
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| SimError::io(format!("cannot create {}", dir.display()), e))
}

fn sweep(cfg: &ExperimentConfig, policies: &[Policy], common: &Common) -> Result<i32, SimError> {
    let reports = policy_sweep(cfg, policies, common.options())?;
    write_outputs(&common.out_dir, cfg, &reports)?;
    for r in &reports {
        let clusters: Vec<String> = r.series[1..]
            .iter()
            .map(|s| format!("{:.2} dB", s.steady_state_db()))
            .collect();
        println!(
            "{:<10} network {:.2} dB, clusters [{}], recovery {:.3}",
            r.policy.name(),
            r.network().steady_state_db(),
            clusters.join(", "),
            r.mean_recovery()
        );
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
