use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qheom_cli::config::Mode;
use qheom_cli::error::{ConfigError, RunError};

#[derive(Parser)]
#[command(name = "qheom", version, about = "HEOM simulations of a driven three-qubit transport network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its results.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run mode (overrides the `mode` key).
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Set a configuration key, e.g. `pulse.tau_ns=25`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Continue a trajectory from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Print the fully resolved configuration.
    Echo {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(
    path: &PathBuf,
    mode: Option<Mode>,
    out: Option<&PathBuf>,
    mut overrides: Vec<String>,
) -> Result<qheom_cli::RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    if let Some(m) = mode {
        overrides.push(format!("mode=\"{}\"", m.name()));
    }
    if let Some(dir) = out {
        let quoted = toml::Value::String(dir.display().to_string()).to_string();
        overrides.push(format!("output.dir={quoted}"));
    }
    qheom_cli::parse_with_overrides(&text, &path.display().to_string(), &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Echo {
            config,
            mode,
            overrides,
        } => load(&config, mode, None, overrides)
            .map(|c| print!("{}", c.to_toml()))
            .map_err(RunError::from),
        Command::Run {
            config,
            out,
            mode,
            overrides,
            resume,
        } => qheom_cli::configure_threads()
            .map_err(RunError::from)
            .and_then(|_| load(&config, mode, out.as_ref(), overrides).map_err(RunError::from))
            .and_then(|c| qheom_cli::runner::execute(&c, resume.as_deref()))
            .map(|outcome| {
                println!("{}", outcome.message);
                for f in outcome.files {
                    println!("  wrote {}", f.display());
                }
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
