use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use infosphere_cli::{exit, run, Cli, CliError};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = cli.resolve_config().and_then(|cfg| {
        let filter = EnvFilter::try_new(&cfg.log_level)
            .map_err(|e| CliError::Config(format!("log_level `{}`: {e}", cfg.log_level)))?;
        tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
        pool.install(|| run(&cli.command, &cfg))
    });
    match outcome {
        Ok(text) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::from(exit::OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            for line in e.details() {
                eprintln!("  {line}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
