use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simmetric::experiment::synth::{write_synthetic, SyntheticSpec};
use simmetric::experiment::{read_results, report, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "simmetric", version, about = "Learn bilinear cosine metrics from word-pair similarity judgments")]
struct Cli {
    /// Overrides the seed of `run`, or seeds `synth`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write per-epoch loss traces for every fold.
    #[arg(long, global = true)]
    trace: bool,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the grid, transfer tests and reports described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic dataset from a hidden factor.
    Synth {
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 40)]
        words: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        /// Hidden factor is I + scale·G.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Learning rate written into the generated config.
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the tables of a completed run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }

    match cli.command {
        Command::Run { config } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    log::error!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cfg.trace |= cli.trace;
            match run_experiment(&cfg) {
                Ok(summary) => {
                    print!("{}", report::render(&summary.results));
                    if summary.all_failed {
                        log::error!("every grid cell failed");
                        return ExitCode::from(3);
                    }
                    log::info!("reports written to {}", summary.output_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    log::error!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Synth {
            dim,
            words,
            noise,
            scale,
            lr,
            folds,
            out,
        } => {
            let spec = SyntheticSpec {
                dim,
                n_words: words,
                hidden_factor_scale: scale,
                noise_sigma: noise,
                seed: cli.seed.unwrap_or(0),
            };
            match write_synthetic(&spec, &out, lr, folds) {
                Ok(files) => {
                    println!("{}", files.embeddings.display());
                    println!("{}", files.judgments.display());
                    println!("{}", files.hidden_factor.display());
                    println!("{}", files.config.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    log::error!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Report { dir } => match read_results(&dir) {
            Ok(results) => {
                let text = report::render(&results);
                print!("{text}");
                let path = dir.join("tables.txt");
                if let Err(e) = fs::write(&path, text) {
                    log::error!("{}: {e}", path.display());
                    return ExitCode::from(2);
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                log::error!("{e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
