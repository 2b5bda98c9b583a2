//! `rpde`: batch experiment runner.
//!
//! `rpde run <config.json>` dispatches on the config's `task` field;
//! `rpde <task> <config.json>` names the task on the command line.
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 numerical
//! divergence.

mod config;
mod error;
mod expr;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{Loaded, Task};
use error::CliError;
use output::Output;

#[derive(Parser)]
#[command(name = "rpde", version, about = "Rough-path PDE experiments")]
struct Cli {
    /// `run`, or one of: lift, metric, sewing-demo, gronwall-demo, solve,
    /// wongzakai, remainders, energy, stability, parabolicity,
    /// smoothing-check.
    command: String,
    /// JSON configuration file.
    config: PathBuf,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let named = match cli.command.as_str() {
        "run" => None,
        other => Some(Task::from_str(other, false).map_err(|_| CliError::Config(format!("unknown command '{other}'")))?),
    };
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let loaded = Loaded { cfg: config::parse(&text)?, text };
    loaded.validate()?;
    let task = match (named, loaded.task()) {
        (None, None) => return Err(CliError::Config("config has no \"task\" field; name one or use `rpde <task>`".into())),
        (Some(a), Some(b)) if a != b => {
            return Err(loaded.error(None, "task", format!("command line names {a:?} but the config's task is {b:?}")));
        }
        (Some(t), _) | (None, Some(t)) => t,
    };
    let dir = loaded.output_dir();
    let mut out = Output::create(&dir)?;
    let summary = tasks::run(task, &loaded, &mut out)?;
    out.json("summary.json", &summary)?;
    for p in out.written() {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
