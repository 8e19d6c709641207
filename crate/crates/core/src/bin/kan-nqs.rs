use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kan_nqs::config::{Overrides, RunConfig};
use kan_nqs::{runner, Error, Result};

#[derive(Parser)]
#[command(name = "kan-nqs", version, about = "Neural-network variational Monte Carlo for spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output.dir` or runs/<run id>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for model initialization and sampling; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the reduced schedules from `[training.desk]`.
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write history, checkpoint and results.
    Train,
    /// Exact diagonalization of the configured Hamiltonian.
    Ed,
    /// Observable series of a trained checkpoint.
    Observe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Ground-space fidelity of a trained checkpoint.
    Fidelity {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Forward-pass timing sweep over chain lengths.
    Bench,
    /// Check a configuration and print the resolved run.
    Validate,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let ov = Overrides {
        seed: cli.seed,
        out: cli.out,
        desk_scale: cli.desk_scale,
    };
    let run = cfg.resolve(&ov)?;
    for w in &run.warnings {
        log::warn!("{w}");
    }
    let ckpt = |c: Option<PathBuf>| c.unwrap_or_else(|| run.out_dir.join("model.ckpt"));
    let record = match cli.command {
        Command::Train => runner::cmd_train(&run, ov.desk_scale)?.record,
        Command::Ed => runner::cmd_ed(&run)?,
        Command::Observe { checkpoint } => runner::cmd_observe(&run, &ckpt(checkpoint))?,
        Command::Fidelity { checkpoint } => runner::cmd_fidelity(&run, &ckpt(checkpoint))?,
        Command::Bench => runner::cmd_bench(&run)?,
        Command::Validate => runner::cmd_validate(&run)?,
    };
    println!("{}", record.to_json());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
