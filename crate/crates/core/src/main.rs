use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use matvae::commands;
use matvae::config::RunConfig;
use matvae::Result;

#[derive(Parser)]
#[command(
    name = "matvae",
    version,
    about = "Nested VAE molecular generator with latent-bias steering"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the work directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Sample the open corpus and the labeled set, build the vocabulary.
    Prepare,
    TrainOuter,
    TrainInner,
    /// Latent-bias (or neighborhood) generation from a seed compound.
    Generate,
    StudyCorrelation,
    StudyBias,
    StudySublist,
    /// Print the effective configuration.
    ShowConfig,
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        // Relative to the working directory, like any other command-line path.
        cfg.paths.work_dir = std::path::absolute(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let m = match cli.verb {
        Verb::Prepare => commands::cmd_prepare(&cfg)?,
        Verb::TrainOuter => commands::cmd_train_outer(&cfg)?,
        Verb::TrainInner => commands::cmd_train_inner(&cfg)?,
        Verb::Generate => commands::cmd_generate(&cfg)?,
        Verb::StudyCorrelation => commands::cmd_study_correlation(&cfg)?,
        Verb::StudyBias => commands::cmd_study_bias(&cfg)?,
        Verb::StudySublist => commands::cmd_study_sublist(&cfg)?,
        Verb::ShowConfig => {
            println!("# config hash {}", cfg.hash()?);
            println!("# outer stage hash {}", cfg.outer_stage_hash()?);
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
    };
    println!("{}", serde_json::to_string_pretty(&m.summary)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Fixed summation order regardless of the machine.
    unsafe { openblas_set_num_threads(1) };
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
