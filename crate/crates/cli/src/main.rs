// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wisent::config::ScenarioConfig;
use wisent::crc16::crc16;
use wisent::ihex::parse_file;
use wisent::model::{model_curves, params_for};
use wisent::scenario::{run_scenario, summary_csv, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "wisent",
    version,
    about = "Simulated firmware transfer to batteryless RFID tags"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for logs, traces and FRAM dumps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the fitted BlockWrite model.
    Model {
        #[arg(long)]
        distance: f64,
        #[arg(long)]
        words: f64,
    },
    /// Validate an Intel Hex file.
    Checksum { hexfile: PathBuf },
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_CONFIG as u8)
}

fn simulate(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut scenario = match ScenarioConfig::from_file(&config) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    match run_scenario(&scenario, out.as_deref()) {
        Ok(report) => {
            print!("{}", summary_csv(&report, scenario.sim.rounds_per_sec));
            eprintln!("{}/{} transfers completed", report.completed(), report.runs.len());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => ExitCode::from({
            eprintln!("error: {e}");
            e.exit_code() as u8
        }),
    }
}

fn model(distance: f64, words: f64) -> ExitCode {
    let values = params_for(distance).and_then(|p| model_curves(p, words));
    match values {
        Ok(v) => {
            println!("psi_t = {:.4}", v.psi_t);
            println!("eta = {:.4}", v.eta);
            println!("psi_s = {:.4}", v.psi_s);
            println!("theta = {:.4}", v.theta);
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn checksum(path: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    match parse_file(&text) {
        Ok(matrix) => {
            let bytes: Vec<u8> = matrix.image().into_iter().map(|(_, b)| b).collect();
            println!(
                "ok: {} records, {} bytes, crc16 {:04X}",
                matrix.len(),
                bytes.len(),
                crc16(&bytes)
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(format!("{}: {e}", path.display())),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate { config, seed, out } => simulate(config, seed, out),
        Command::Model { distance, words } => model(distance, words),
        Command::Checksum { hexfile } => checksum(hexfile),
    }
}
