use std::path::PathBuf;

use clap::{Parser, Subcommand};

use dpglm_cli::config::ExperimentConfig;
use dpglm_cli::report::{write_csv, write_noise_log};
use dpglm_cli::runner::run_experiment_with_checkpoints;

#[derive(Parser)]
#[command(name = "dpglm", about = "Differentially private GLM/network experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sweep value, seed) cell of an experiment config and write
    /// results.csv plus noise_log.csv into the output directory.
    Run {
        /// Path to a JSON experiment config
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Offset added to every seed in the config
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write a model checkpoint per network-training cell
        #[arg(long)]
        checkpoints: bool,
    },
    /// Parse and validate a config without running it.
    Check {
        config: PathBuf,
    },
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> dpglm_cli::Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, seed_offset, jobs, checkpoints } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            std::fs::create_dir_all(&out)?;
            let ckpt_dir = checkpoints.then(|| out.join("checkpoints"));
            if let Some(dir) = &ckpt_dir {
                std::fs::create_dir_all(dir)?;
            }
            let (rows, logs) =
                run_experiment_with_checkpoints(&cfg, seed_offset, jobs, ckpt_dir.as_deref())?;
            write_csv(&rows, &out.join("results.csv"))?;
            write_noise_log(&logs, &out.join("noise_log.csv"))?;
            log::info!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            cfg.validate()?;
            println!("{}: ok", cfg.id());
            Ok(())
        }
    }
}
