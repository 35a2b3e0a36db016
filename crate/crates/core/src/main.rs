use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dr_lab::config::RunConfig;
use dr_lab::experiments::{run, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "dr-lab", version, about = "Experiments on the max-plus recursion on binary trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the available experiments.
    ListExperiments,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DR_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("DR_LAB_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("DR_LAB_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match cli.command {
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<20} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out } => {
            let result = RunConfig::load(&config).and_then(|mut cfg| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let dir = out
                    .or_else(|| cfg.out.clone())
                    .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
                let files = run(&cfg, &dir)?;
                Ok((dir, files))
            });
            match result {
                Ok((dir, files)) => {
                    for f in files {
                        println!("{}", dir.join(f).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
