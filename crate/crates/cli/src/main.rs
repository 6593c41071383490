use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use supsearch_cli::config::{Command, Format};
use supsearch_cli::{run, CliError, Invocation};

/// Supplier search model: simulation, calibration, counterfactuals and the
/// transaction-panel pipeline.
#[derive(Debug, Parser)]
#[command(name = "supsearch", version = supsearch_cli::artifacts::build_id())]
struct Cli {
    /// Command to run; may instead come from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random component.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: <out-root>/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "SUPSEARCH_OUT", default_value = "runs")]
    out_root: PathBuf,
    /// Worker threads for firm-level parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Which artifact formats to write.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Setting override as dotted.path=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::Validation(e.render().to_string().trim().to_string());
            eprintln!("{}", err.report(None));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let inv = Invocation {
        command: cli.command,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        out_root: Some(cli.out_root),
        threads: cli.threads,
        format: cli.format,
        set: cli.set,
    };
    match run(&inv) {
        Ok(summary) => {
            println!("{}", summary.report());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report(inv.command));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
