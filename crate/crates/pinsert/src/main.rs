use clap::{Parser, Subcommand};
use pinsert::cli::{self, CliError, LearnPhase};
use pinsert::config::RunConfig;
use std::path::PathBuf;

/// Simulated multi-pin insertion: tracking, retries, goal inference, and
/// parameter learning.
#[derive(Parser)]
#[command(name = "pinsert", version, about)]
struct Args {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one full insertion episode and write its artifacts.
    Insert {
        /// Task seed; derived from the master seed when omitted.
        #[arg(long)]
        task_seed: Option<u64>,
    },
    /// Compare belief-driven retries against Gaussian-random retries on
    /// matched seeded tasks.
    BenchmarkPim {
        /// Number of tasks.
        #[arg(long, default_value_t = 100)]
        tasks: u64,
    },
    /// Run the learning protocol.
    Learn {
        /// Phase: occt_sia | pim | finetune | all.
        #[arg(long, default_value = "all")]
        phase: LearnPhase,
        /// Override the generation budget of every phase run.
        #[arg(long)]
        gens: Option<usize>,
    },
    /// Check the configuration and exit.
    ValidateConfig,
}

fn load_config(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env_overrides(std::env::vars());
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    match &args.command {
        Command::Insert { task_seed } => {
            let art = cli::cmd_insert(&cfg, *task_seed)?;
            println!(
                "success: {} attempt(s), {} collision(s), {:.2} s insertion time",
                art.stats.attempts, art.stats.collisions, art.stats.t_insert
            );
            println!("artifacts: {}", art.dir.display());
        }
        Command::BenchmarkPim { tasks } => {
            let r = cli::cmd_benchmark_pim(&cfg, *tasks)?;
            println!(
                "inference: {:.2} attempts mean, {:.0}% success",
                r.pim_mean_attempts,
                100.0 * r.pim_success_rate
            );
            println!(
                "random:    {:.2} attempts mean, {:.0}% success",
                r.random_mean_attempts,
                100.0 * r.random_success_rate
            );
            println!("advantage: {:.2} attempts", r.advantage);
        }
        Command::Learn { phase, gens } => {
            let report = cli::cmd_learn(&cfg, *phase, *gens)?;
            for p in &report.phases {
                println!(
                    "phase {}: {} candidates, best cost {:.4}",
                    p.phase,
                    p.candidates.len(),
                    p.es.best_fitness
                );
            }
            println!("learned parameters written under {}/learn", cfg.out_dir);
        }
        Command::ValidateConfig => {
            cli::cmd_validate(&cfg)?;
            println!("configuration ok");
        }
    }
    Ok(())
}

fn main() {
    let args = Args::parse();
    if let Err(e) = run(&args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
