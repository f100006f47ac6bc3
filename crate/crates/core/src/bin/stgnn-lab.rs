use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stgnn_lab::config::{ExperimentConfig, Task};
use stgnn_lab::experiments;
use stgnn_lab::Error;

#[derive(Parser)]
#[command(name = "stgnn-lab", version, about = "Space-time GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/validation/test datasets.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train an ST-GNN on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate trained parameters on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the task's perturbation sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the default config of a task.
    PrintDefaults {
        #[arg(long, default_value = "flocking_dynamic")]
        task: String,
    },
}

fn run(cli: Cli) -> stgnn_lab::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let load = |path: &PathBuf| -> stgnn_lab::Result<ExperimentConfig> {
        let cfg = ExperimentConfig::load(path)?;
        Ok(match cli.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    };
    let manifest = match &cli.command {
        Command::GenData { config } => experiments::cmd_gen_data(&load(config)?)?,
        Command::Train { config } => experiments::cmd_train(&load(config)?)?,
        Command::Eval { config } => experiments::cmd_eval(&load(config)?)?,
        Command::Sweep { config } => experiments::cmd_sweep(&load(config)?)?,
        Command::PrintDefaults { task } => {
            print!("{}", experiments::print_defaults(Task::parse(task)?));
            return Ok(());
        }
    };
    for a in &manifest.artifacts {
        println!("{}  {}", a.sha256, a.path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("stgnn-lab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("stgnn-lab: {e}");
            ExitCode::from(3)
        }
    }
}
