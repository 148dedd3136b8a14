use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multilink_cli::run::{cmd_fit, cmd_percentile, cmd_region, cmd_test_link, Session};
use multilink_cli::{CliError, CliResult, RunConfig};

/// Multinomial regression with parametric links and joint percentile
/// confidence regions.
#[derive(Debug, Parser)]
#[command(name = "multilink", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration leaf, e.g. `--set percentile.trace.n2=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the configured model and write the fit report and covariance.
    Fit,
    /// Score tests of the link parameters and stepwise selection.
    TestLink,
    /// Print the estimated percentile.
    Percentile,
    /// Trace the confidence regions and write boundaries, SVG and metadata.
    Region,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    let session = Session::new(config)?;
    match cli.command {
        Command::Fit => cmd_fit(&session).map(drop),
        Command::TestLink => cmd_test_link(&session).map(drop),
        Command::Percentile => cmd_percentile(&session).map(drop),
        Command::Region => {
            let outcome = cmd_region(&session)?;
            match outcome.failures.first() {
                Some((m, e)) => Err(CliError::Numeric(format!("{m} region failed: {e}"))),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
