use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use drdamp::pipeline::{self, Format, MethodSelection, RunConfig, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Analyze,
    Sobol,
    Pce,
    Tune,
    Validate,
    Simulate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Drdoc,
    So,
    Ro,
    All,
}

/// Damping-controller tuning under disturbance uncertainty.
#[derive(Debug, Parser)]
#[command(name = "drdamp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Solver selection; overrides the config.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> drdamp::Result<Vec<PathBuf>> {
    let mut config = RunConfig::from_json_file(&cli.config)?;
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        config.output_dir = o.clone();
    }
    if let Some(m) = cli.method {
        config.method = match m {
            MethodArg::Drdoc => MethodSelection::Drdoc,
            MethodArg::So => MethodSelection::So,
            MethodArg::Ro => MethodSelection::Ro,
            MethodArg::All => MethodSelection::All,
        };
    }
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let cmd = match cli.command {
        Command::Analyze => Subcommand::Analyze,
        Command::Sobol => Subcommand::Sobol,
        Command::Pce => Subcommand::Pce,
        Command::Tune => Subcommand::Tune,
        Command::Validate => Subcommand::Validate,
        Command::Simulate => Subcommand::Simulate,
    };
    pipeline::run(cmd, &config, format)
}
