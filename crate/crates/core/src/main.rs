use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use thermomachine::harness::experiments::{describe, EXPERIMENTS};
use thermomachine::harness::verify::CRITERIA;
use thermomachine::harness::{load_config, run_experiment, verify_suite, write_rows, ExperimentConfig, ResultRow};
use thermomachine::Error;

#[derive(Parser)]
#[command(name = "thermomachine", version, about = "Work-extraction experiments for strongly coupled thermal machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers for sweeps.
    #[arg(long, env = "THERMOMACHINE_WORKERS")]
    workers: Option<usize>,
    /// CSV destination; overrides `output` in the config. `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments listed in the config and write their CSV rows.
    Run(RunArgs),
    /// Run the acceptance criteria selected in the config.
    Verify(RunArgs),
    /// Print the registered experiment ids and acceptance criteria.
    ListExperiments,
}

fn prepare(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<(), Error> {
    match cfg.output.as_deref() {
        None | Some("-") => write_rows(std::io::stdout().lock(), rows),
        Some(path) => {
            let file = std::fs::File::create(path)?;
            write_rows(std::io::BufWriter::new(file), rows)?;
            log::info!("wrote {} rows to {path}", rows.len());
            Ok(())
        }
    }
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::NotHermitian { .. } | Error::DimensionMismatch(_) | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for (id, _) in EXPERIMENTS {
                println!("{id:<22} {}", describe(id));
            }
            println!();
            for (k, name) in CRITERIA {
                println!("criterion {k:>2}  {name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => {
            let cfg = match prepare(&args) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            match run_experiment(&cfg).and_then(|rows| emit(&cfg, &rows)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => exit_for(&e),
            }
        }
        Command::Verify(args) => {
            let cfg = match prepare(&args) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            let report = match verify_suite(&cfg) {
                Ok(r) => r,
                Err(e) => return exit_for(&e),
            };
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for r in &report.results {
                eprintln!("{}", r.line());
            }
            if let Err(e) = emit(&cfg, &report.rows()) {
                return exit_for(&e);
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
