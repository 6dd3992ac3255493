//! `fedhunter`: preprocess, train, evaluate, explain, quality-check and
//! synthesize, with a manifest next to every artifact.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure, 5 stale artifact.

mod args;
mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use fedhunter_core::ErrorClass;

use args::{Cli, Command};
use commands::{Outcome, UsageError};
use manifest::{FileDigest, RunManifest};

const THREADS_ENV: &str = "FEDHUNTER_THREADS";

fn command_name(cmd: &Command) -> &'static str {
    use args::{Explain, Preprocess, Quality, Synth};
    match cmd {
        Command::Preprocess(Preprocess::Netflow(_)) => "preprocess netflow",
        Command::Preprocess(Preprocess::Provenance(_)) => "preprocess provenance",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Explain(Explain::KernelShap(_)) => "explain kernel-shap",
        Command::Explain(Explain::GradientShap(_)) => "explain gradient-shap",
        Command::Quality(Quality::Build(_)) => "quality build",
        Command::Quality(Quality::Check(_)) => "quality check",
        Command::Synth(Synth::Netflow(_)) => "synth netflow",
        Command::Synth(Synth::Provenance(_)) => "synth provenance",
        Command::Replay(_) => "replay",
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Preprocess(c) => commands::preprocess(c),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Explain(c) => commands::explain(c),
        Command::Quality(c) => commands::quality(c),
        Command::Synth(c) => commands::synth(c),
        Command::Replay(_) => unreachable!("replay is handled before dispatch"),
    }
}

fn write_manifest(cmd: &Command, args: &[String], outcome: &Outcome, started: Instant) -> Result<()> {
    let Some(primary) = outcome.outputs.first() else {
        return Ok(());
    };
    let digests = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>();
    let manifest = RunManifest {
        command: command_name(cmd).to_string(),
        args: args.to_vec(),
        cwd: std::env::current_dir().context("reading the working directory")?,
        config: outcome.config.clone(),
        seed: outcome.seed,
        inputs: digests(&outcome.inputs)?,
        outputs: digests(&outcome.outputs)?,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    manifest.save(&RunManifest::path_for(primary))
}

fn replay(manifest_path: &Path) -> Result<()> {
    let manifest = RunManifest::load(manifest_path)?;
    std::env::set_current_dir(&manifest.cwd)
        .with_context(|| format!("entering recorded directory {}", manifest.cwd.display()))?;
    let argv = std::iter::once("fedhunter".to_string()).chain(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| UsageError(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(UsageError("a manifest cannot replay another replay".into()).into());
    }
    dispatch(&cli.command)?;
    let mut mismatched = Vec::new();
    for recorded in &manifest.outputs {
        let now = FileDigest::of(&recorded.path)?;
        if now.sha256 != recorded.sha256 {
            mismatched.push(recorded.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        bail!("replay produced different artifacts: {}", mismatched.join(", "));
    }
    println!("replay ok: {} artifact(s) byte-identical", manifest.outputs.len());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| UsageError(format!("{THREADS_ENV} must be a thread count, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<fedhunter_core::Error>() {
            return match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
                ErrorClass::Stale => 5,
            };
        }
    }
    3
}

/// The error chain on one line, dropping causes already quoted by their parent.
fn render_error(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: &Cli, args: &[String]) -> Result<()> {
    configure_threads()?;
    if let Command::Replay(a) = &cli.command {
        return replay(&a.manifest);
    }
    let started = Instant::now();
    let outcome = dispatch(&cli.command)?;
    write_manifest(&cli.command, args, &outcome, started)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        let data: anyhow::Error = fedhunter_core::Error::Graph("x".into()).into();
        assert_eq!(exit_code(&data), 3);
        let numeric: anyhow::Error = fedhunter_core::Error::NonFinite("x".into()).into();
        assert_eq!(exit_code(&numeric.context("training")), 4);
        let stale: anyhow::Error = fedhunter_core::Error::StaleDataset { expected: "a".into(), actual: "b".into() }.into();
        assert_eq!(exit_code(&stale), 5);
        assert_eq!(exit_code(&UsageError("u".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 3);
    }

    #[test]
    fn repeated_causes_are_dropped() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e: anyhow::Error = fedhunter_core::Error::Io { path: "q.json".into(), source: io }.into();
        assert_eq!(render_error(&e.context("loading")), "loading: q.json: gone");
    }
}
