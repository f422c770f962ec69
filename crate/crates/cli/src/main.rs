use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use garz_cli::commands::{out_dir, run, Cli};
use garz_cli::CliError;

fn write_error(dir: &Path, err: &CliError) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json = serde_json::to_string_pretty(&err.report())?;
    let path = dir.join("error.json");
    fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Some(dir) = out_dir(&cli) {
                if let Err(e) = write_error(dir, &err) {
                    eprintln!("error: {e:#}");
                }
            }
            ExitCode::from(err.exit_code())
        }
    }
}
