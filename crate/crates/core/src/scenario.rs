// SPDX-License-Identifier: MIT OR Apache-2.0

//! Repeated simulation runs from a [`ScenarioConfig`] and their CSV artifacts.
//!
//! Files written to the output directory:
//! `run_<k>_log.csv` (transfer log), `run_<k>_trace.csv` (distance trace),
//! `run_<k>_fram.bin` (raw 64 KiB FRAM dump) and `summary.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, Source};
use crate::fixture;
use crate::ihex::{parse_file, IhexError, RecordMatrix};
use crate::metrics::{compute_metrics, SessionMetrics};
use crate::sim::{run_session, SessionResult, SimError};

pub const SUMMARY_CSV_HEADER: &str = "run,completed,t,m_t,m_r,p_r,mean_S_p,theta";
pub const TRACE_CSV_HEADER: &str = "round,t,d_cm,powered";

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_TRANSFER_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Hex { path: PathBuf, source: IhexError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run: u32,
    pub seed: u64,
    pub result: SessionResult,
    /// `None` only when the log is empty.
    pub metrics: Option<SessionMetrics>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub runs: Vec<RunOutput>,
}

impl ScenarioReport {
    pub fn completed(&self) -> usize {
        self.runs.iter().filter(|r| r.result.completed()).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.completed() == self.runs.len() {
            EXIT_OK
        } else {
            EXIT_TRANSFER_FAILED
        }
    }
}

/// Seed of run `run` in a scenario seeded with `seed`.
pub fn run_seed(seed: u64, run: u32) -> u64 {
    seed.wrapping_add(run as u64)
}

pub fn load_source(source: &Source) -> Result<RecordMatrix, ScenarioError> {
    match source {
        Source::Firmware => Ok(fixture::firmware()),
        Source::Random { bytes, row_len, seed } => Ok(fixture::random_image(*bytes, *row_len, *seed)),
        Source::Hex(path) => {
            let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
                path: path.clone(),
                source,
            })?;
            parse_file(&text).map_err(|source| ScenarioError::Hex {
                path: path.clone(),
                source,
            })
        }
    }
}

/// Run every repeat of the scenario, in parallel, and write the artifacts
/// to `out_dir` if given.
pub fn run_scenario(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioReport, ScenarioError> {
    let matrix = load_source(&config.source)?;
    let mut runs = (0..config.repeat)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(config.seed, run);
            let result = run_session(config.host, matrix.clone(), &config.sim, config.profile, seed)?;
            let metrics = compute_metrics(&result.log, result.rounds, config.sim.rounds_per_sec).ok();
            Ok(RunOutput {
                run,
                seed,
                result,
                metrics,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    runs.sort_by_key(|r| r.run);
    let report = ScenarioReport { runs };
    if let Some(dir) = out_dir {
        write_artifacts(&report, config.sim.rounds_per_sec, dir)?;
    }
    Ok(report)
}

pub fn summary_csv(report: &ScenarioReport, rounds_per_sec: f64) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in &report.runs {
        let t = r.result.seconds(rounds_per_sec);
        let (m_t, m_r, p_r, mean_s_p, theta) = match &r.metrics {
            Some(m) => (m.m_t, m.m_r, m.p_r, m.mean_s_p, m.theta),
            None => (0, 0, 0.0, 0.0, 0.0),
        };
        let _ = writeln!(
            out,
            "{},{},{t:.3},{m_t},{m_r},{p_r:.6},{mean_s_p:.4},{theta:.4}",
            r.run,
            r.result.completed()
        );
    }
    out
}

pub fn trace_csv(result: &SessionResult, rounds_per_sec: f64) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for p in &result.trace {
        let _ = writeln!(
            out,
            "{},{:.4},{:.3},{}",
            p.round,
            p.round as f64 / rounds_per_sec,
            p.d_cm,
            u8::from(p.powered)
        );
    }
    out
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<(), ScenarioError> {
    fs::write(&path, contents).map_err(|source| ScenarioError::Io { path, source })
}

fn write_artifacts(report: &ScenarioReport, rounds_per_sec: f64, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for r in &report.runs {
        let k = r.run;
        write_file(dir.join(format!("run_{k}_log.csv")), r.result.log.to_csv().as_bytes())?;
        write_file(
            dir.join(format!("run_{k}_trace.csv")),
            trace_csv(&r.result, rounds_per_sec).as_bytes(),
        )?;
        write_file(dir.join(format!("run_{k}_fram.bin")), r.result.tag.fram().as_bytes())?;
    }
    write_file(dir.join("summary.csv"), summary_csv(report, rounds_per_sec).as_bytes())
}
