use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use hybridsplit_core::crypto::Hash32;
use hybridsplit_core::scenario::{compare_result, run_result, trace_result, ScenarioFile};

const EXIT_INPUT: u8 = 1;
const EXIT_MISMATCH: u8 = 2;

/// Run hybrid on/off-chain betting scenarios against the simulated ledger.
#[derive(Debug, Parser)]
#[command(name = "hybridsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pretty-print JSON with the given indent (2 when given without a value).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "2", value_name = "N")]
    json_indent: Option<usize>,

    /// 32-byte hex seed for participant keys, overriding the scenario's.
    #[arg(long, global = true, value_name = "HEX32")]
    seed: Option<Hash32>,

    /// Number of scenario files processed in parallel.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute scenarios and report outcome, balances and gas.
    Run { files: Vec<PathBuf> },
    /// Execute scenarios on both the hybrid and the all-on-chain model.
    Compare { files: Vec<PathBuf> },
    /// Emit the full transaction trace of each scenario.
    Trace { files: Vec<PathBuf> },
}

#[derive(Clone, Copy)]
enum Mode {
    Run,
    Compare,
    Trace,
}

struct Outcome {
    document: serde_json::Value,
    mismatch: bool,
}

fn process(mode: Mode, path: &PathBuf, seed: Option<Hash32>) -> Result<Outcome> {
    let mut file = ScenarioFile::load(path).with_context(|| format!("{}", path.display()))?;
    if seed.is_some() {
        file.seed = seed;
    }
    let run = file.execute(None).with_context(|| format!("{}", path.display()))?;
    let (document, mismatch) = match mode {
        Mode::Run => {
            let result = run_result(&file, &run)?;
            let mismatch = result.expectations_met == Some(false);
            (serde_json::to_value(result)?, mismatch)
        }
        Mode::Compare => {
            let result = compare_result(&file, &run)?;
            let mismatch = !result.balance_diff.is_empty();
            (serde_json::to_value(result)?, mismatch)
        }
        Mode::Trace => (serde_json::to_value(trace_result(&file, &run))?, false),
    };
    Ok(Outcome { document, mismatch })
}

fn process_all(mode: Mode, files: &[PathBuf], seed: Option<Hash32>, jobs: usize) -> Vec<Result<Outcome>> {
    let jobs = jobs.clamp(1, files.len().max(1));
    if jobs == 1 {
        return files.iter().map(|f| process(mode, f, seed)).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<Outcome>>> = files.iter().map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let out = process(mode, path, seed);
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every file processed")).collect()
}

fn render<T: Serialize>(value: &T, indent: Option<usize>) -> Result<String> {
    Ok(match indent {
        None => serde_json::to_string(value)?,
        Some(n) => {
            let pad = vec![b' '; n];
            let formatter = serde_json::ser::PrettyFormatter::with_indent(&pad);
            let mut out = Vec::new();
            let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
            value.serialize(&mut ser)?;
            String::from_utf8(out)?
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (mode, files) = match &cli.command {
        Command::Run { files } => (Mode::Run, files),
        Command::Compare { files } => (Mode::Compare, files),
        Command::Trace { files } => (Mode::Trace, files),
    };
    if files.is_empty() {
        eprintln!("error: no scenario files given");
        return ExitCode::from(EXIT_INPUT);
    }

    let mut documents = Vec::new();
    let mut input_error = false;
    let mut mismatch = false;
    for result in process_all(mode, files, cli.seed, cli.jobs) {
        match result {
            Ok(out) => {
                mismatch |= out.mismatch;
                documents.push(out.document);
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                input_error = true;
            }
        }
    }
    if input_error {
        return ExitCode::from(EXIT_INPUT);
    }
    let rendered = if documents.len() == 1 {
        render(&documents[0], cli.json_indent)
    } else {
        render(&documents, cli.json_indent)
    };
    match rendered {
        Ok(text) => println!("{text}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    if mismatch {
        ExitCode::from(EXIT_MISMATCH)
    } else {
        ExitCode::SUCCESS
    }
}
