use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gstrand::config::Command;
use gstrand::output::Status;

/// Peakon solutions of Diff(R)-strand equations: exact families, numerical
/// evolution and residual checks.
#[derive(Parser, Debug)]
#[command(name = "gstrand", version)]
struct Cli {
    /// analytic | simulate | verify | ch | collision | complex-verify
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV data and manifest.json.
    #[arg(long, default_value = "gstrand-out")]
    out: PathBuf,
    /// Reject unknown config keys instead of warning.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(Status::ConfigError.exit_code() as u8);
        }
    };
    let manifest = gstrand::run::run(cli.command, &text, cli.strict, Some(&cli.out));

    for c in &manifest.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict} {:<24} {:.3e} ({:?} {:.1e})", c.name, c.value, c.comparison, c.tolerance);
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    println!("{:?}: manifest in {}", manifest.status, cli.out.join("manifest.json").display());
    ExitCode::from(manifest.status.exit_code() as u8)
}
