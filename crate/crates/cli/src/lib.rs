//! `bankwatch`: batch pipeline for bank bankruptcy prediction.
//!
//! Each subcommand writes its artifacts plus `manifest.json` into `--out`
//! (default `$BANKWATCH_OUT`, else `bankwatch-out`). Exit codes: 0 success,
//! 1 internal error, 2 configuration error, 3 data error, 4 convergence
//! failure (diagnostics are still written).

pub mod args;
mod commands;
pub mod exit;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command, Global};
pub use exit::{CliError, CliResult, Failure};
pub use manifest::{Manifest, Run, MANIFEST};

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Failure::Config.code() } else { 0 };
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.code()
        }
    }
}

/// Runs one parsed invocation. The manifest is on disk whether or not the
/// command succeeded.
pub fn run(cli: &Cli) -> CliResult<Manifest> {
    match cli.global.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::internal(e.to_string()))?
            .install(|| dispatch(&cli.global, &cli.command)),
        None => dispatch(&cli.global, &cli.command),
    }
}

fn dispatch(global: &Global, command: &Command) -> CliResult<Manifest> {
    if let Command::Replay(a) = command {
        return replay(global, &a.manifest);
    }
    let mut run = Run::new(global.out.clone())?;
    let outcome = match command {
        Command::Synth(a) => commands::synth(global, a, &mut run),
        Command::Clean(a) => commands::clean_cmd(global, a, &mut run),
        Command::Smote(a) => commands::smote(global, a, &mut run),
        Command::Split(a) => commands::split_cmd(global, a, &mut run),
        Command::Train(a) => commands::train(global, a, &mut run),
        Command::Evaluate(a) => commands::evaluate_cmd(global, a, &mut run),
        Command::Gridsearch(a) => commands::gridsearch(global, a, &mut run),
        Command::Trend(a) => commands::trend(global, a, &mut run),
        Command::Pipeline(a) => commands::pipeline(global, a, &mut run),
        Command::Replay(_) => unreachable!(),
    };
    let manifest = run.finish(global, command, &outcome)?;
    outcome.map(|()| manifest)
}

/// Re-executes a manifest into `global.out` and checks every output hash.
/// Succeeds when the outputs match, even if the original run had failed
/// with the same result.
fn replay(global: &Global, path: &std::path::Path) -> CliResult<Manifest> {
    let original = Manifest::load(path)?;
    if matches!(original.command, Command::Replay(_)) {
        return Err(CliError::config("a manifest cannot record a replay"));
    }
    for input in &original.inputs {
        let bytes = std::fs::read(&input.path)
            .map_err(|e| CliError::data(format!("replay input {}: {e}", input.path)))?;
        if manifest::sha256_hex(&bytes) != input.sha256 {
            return Err(CliError::data(format!("replay input {} changed since the recorded run", input.path)));
        }
    }
    let mut g = original.global.clone();
    g.out = global.out.clone();
    let replayed = match dispatch(&g, &original.command) {
        Ok(m) => m,
        Err(e) if e.kind.code() == original.exit_code => Manifest::load(&g.out.join(MANIFEST))?,
        Err(e) => return Err(e),
    };
    let diverged: Vec<&str> = original
        .outputs
        .iter()
        .filter(|o| !replayed.outputs.contains(o))
        .map(|o| o.path.as_str())
        .collect();
    if !diverged.is_empty() || replayed.outputs.len() != original.outputs.len() {
        return Err(CliError::internal(format!("replay diverged on: {}", diverged.join(", "))));
    }
    println!("replayed {} outputs byte-identically", replayed.outputs.len());
    Ok(replayed)
}
