//! Command-line runner for federated threat-detection experiments.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3
//! for failures during a run.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedsec::error::{ConfigError, RunError};
use fedsec::evalgen::{export_dataset, generate};
use fedsec::runner::{
    compare_models, run_experiment, seed_list, sweep_dataset_size, sweep_nodes, write_run, ExperimentConfig,
    TransportMode,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fedsec", version, about = "Federated multimodal threat detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run clients in-process or over localhost TCP.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Run simulated clients on worker threads.
    #[arg(long, global = true)]
    threaded: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sim,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.csv and timings.csv.
    Run { config: PathBuf },
    /// Accuracy against dataset size.
    SweepSize {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        sizes: Vec<usize>,
        /// Number of consecutive seeds per size.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Training time and accuracy against node count.
    SweepNodes {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Centralized and federated models, with and without fusion.
    Compare {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Write the generated train and test splits as binary tables.
    ExportData { config: PathBuf },
}

fn load(path: &Path, g: &Global) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        cfg.output_dir = dir.clone();
    }
    match g.mode {
        Some(Mode::Sim) => cfg.transport = TransportMode::Sim,
        Some(Mode::Socket) => cfg.transport = TransportMode::Socket,
        None => {}
    }
    if g.threaded {
        cfg.threaded = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(cfg: &ExperimentConfig, count: usize) -> Result<Vec<u64>, RunError> {
    if count == 0 {
        return Err(ConfigError::invalid("seeds", "need at least one seed").into());
    }
    Ok(seed_list(cfg.seed, count))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, &cli.global)?;
            let report = run_experiment(&cfg)?;
            write_run(&cfg.output_dir, &cfg, &report)?;
            let s = &report.summary;
            println!(
                "{}: accuracy {:.4}, fpr {}, fnr {}, global loss {:.4}, train {:.3}s -> {}",
                s.scenario,
                s.accuracy,
                opt(s.fpr),
                opt(s.fnr),
                s.global_loss,
                s.train_seconds,
                cfg.output_dir.display()
            );
        }
        Command::SweepSize { config, sizes, seeds: n } => {
            let cfg = load(&config, &cli.global)?;
            let trend = sweep_dataset_size(&cfg, &sizes, &seeds(&cfg, n)?, Some(&cfg.output_dir))?;
            for r in &trend.rows {
                println!("n_samples {:>8}: mean accuracy {:.4}", r.value, r.mean_accuracy);
            }
        }
        Command::SweepNodes { config, nodes, seeds: n } => {
            let cfg = load(&config, &cli.global)?;
            let trend = sweep_nodes(&cfg, &nodes, &seeds(&cfg, n)?, Some(&cfg.output_dir))?;
            for r in &trend.rows {
                println!(
                    "clients {:>4}: mean accuracy {:.4}, mean train {:.3}s",
                    r.value, r.mean_accuracy, r.mean_train_seconds
                );
            }
        }
        Command::Compare { config, seeds: n } => {
            let cfg = load(&config, &cli.global)?;
            let cmp = compare_models(&cfg, &seeds(&cfg, n)?, Some(&cfg.output_dir))?;
            for r in &cmp.rows {
                println!(
                    "{:<22} accuracy {:.4}, fpr {}, fnr {}",
                    r.model,
                    r.accuracy,
                    opt(r.fpr),
                    opt(r.fnr)
                );
            }
        }
        Command::ExportData { config } => {
            let cfg = load(&config, &cli.global)?;
            let spec = cfg.synthetic_spec()?;
            let (train, test) = generate(&spec)?.split(cfg.train_fraction);
            std::fs::create_dir_all(&cfg.output_dir)?;
            export_dataset(&cfg.output_dir.join("train"), &spec, &train)?;
            export_dataset(&cfg.output_dir.join("test"), &spec, &test)?;
            println!("wrote {} train and {} test rows to {}", train.len(), test.len(), cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
