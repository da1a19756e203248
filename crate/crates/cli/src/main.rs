use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twinphoton::io::{self, Overrides, Protocol};
use twinphoton::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;

/// Photon-pair fiber metrology simulator.
#[derive(Parser)]
#[command(name = "twinphoton", version)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one measurement protocol from a config file.
    Simulate {
        /// tof, interferometer, pmd or calibrate.
        protocol: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detector-efficiency calibration; same as `simulate calibrate`.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the config embedded in a result record and compare.
    Replay {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_estimation_failure() {
        return EXIT_ESTIMATION;
    }
    match e {
        Error::Validation { .. }
        | Error::Parse(_)
        | Error::Config(_)
        | Error::Domain(_)
        | Error::Range(_)
        | Error::Format { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn simulate(protocol: Protocol, config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8, (Error, String)> {
    let overrides = Overrides {
        protocol: Some(protocol),
        seed,
        output_dir: out,
    };
    let cfg = io::load_config_with(&config, &overrides).map_err(|e| (e, config.display().to_string()))?;
    let output = io::run(&cfg).map_err(|e| (e, protocol.to_string()))?;
    print!("{}", output.summary);
    Ok(if output.record.estimation_failed() { EXIT_ESTIMATION } else { 0 })
}

fn replay(record: PathBuf, out: Option<PathBuf>) -> Result<u8, (Error, String)> {
    let r = io::replay(&record, out).map_err(|e| (e, "replay".to_string()))?;
    print!("{}", r.output.summary);
    if !r.reproduced() {
        for f in &r.raw_mismatches {
            eprintln!("replay: raw file {f} differs from the record");
        }
        if !r.estimates_match {
            eprintln!("replay: estimates differ from the record");
        }
        return Ok(EXIT_RUNTIME);
    }
    println!("replay  raw files and estimates match the record");
    Ok(if r.output.record.estimation_failed() { EXIT_ESTIMATION } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match cli.command {
        Command::Simulate {
            protocol,
            config,
            seed,
            out,
        } => match protocol.parse::<Protocol>() {
            Ok(p) => simulate(p, config, seed, out),
            Err(e) => Err((e, "simulate".to_string())),
        },
        Command::Calibrate { config, seed, out } => simulate(Protocol::Calibrate, config, seed, out),
        Command::Replay { record, out } => replay(record, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((e, context)) => {
            eprintln!("error: {context}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
