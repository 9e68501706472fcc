// SPDX-License-Identifier: MIT OR Apache-2.0

//! Discrete-time simulation loop: one inventory round per tick.
//!
//! Per tick: distance and power update, reader applies due host commands,
//! the round executes, the host reacts to the report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::host::{HostConfig, HostError, HostSession, SessionOutcome, TransferLog};
use crate::ihex::RecordMatrix;
use crate::reader::{Reader, ReaderError, ReaderParams, RoundContext};
use crate::tag::{Mode, PowerModel, PowerParams, Tag, TagConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error("invalid distance profile: {0}")]
    Profile(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceProfile {
    Static {
        d_cm: f64,
    },
    /// Triangle wave starting at `min_cm`, moving at `speed` m/s.
    Oscillate {
        min_cm: f64,
        max_cm: f64,
        speed: f64,
    },
}

impl DistanceProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            DistanceProfile::Static { d_cm } if !(d_cm > 0.0) => Err(SimError::Profile("distance must be positive")),
            DistanceProfile::Oscillate { min_cm, max_cm, speed } => {
                if !(min_cm > 0.0) || !(max_cm >= min_cm) {
                    Err(SimError::Profile("need 0 < min <= max"))
                } else if !(speed > 0.0) {
                    Err(SimError::Profile("speed must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn distance_cm(&self, t: f64) -> f64 {
        match *self {
            DistanceProfile::Static { d_cm } => d_cm,
            DistanceProfile::Oscillate { min_cm, max_cm, speed } => {
                let span = max_cm - min_cm;
                if span == 0.0 {
                    return min_cm;
                }
                let travelled = (t * speed * 100.0) % (2.0 * span);
                min_cm
                    + if travelled <= span {
                        travelled
                    } else {
                        2.0 * span - travelled
                    }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub rounds_per_sec: f64,
    pub channel: ChannelParams,
    pub power: PowerParams,
    pub reader: ReaderParams,
    pub tag: TagConfig,
    pub max_rounds: u64,
    /// Record the distance trace every this many rounds; 0 disables it.
    pub trace_every: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            rounds_per_sec: 60.0,
            channel: ChannelParams::default(),
            power: PowerParams::default(),
            reader: ReaderParams::default(),
            tag: TagConfig::default(),
            max_rounds: 2_000_000,
            trace_every: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub round: u64,
    pub d_cm: f64,
    pub powered: bool,
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub outcome: SessionOutcome,
    pub log: TransferLog,
    pub rounds: u64,
    pub tag: Tag,
    pub trace: Vec<TracePoint>,
}

impl SessionResult {
    pub fn completed(&self) -> bool {
        self.outcome == SessionOutcome::Complete
    }

    pub fn seconds(&self, rounds_per_sec: f64) -> f64 {
        self.rounds as f64 / rounds_per_sec
    }

    pub fn tag_mode(&self) -> Mode {
        self.tag.mode()
    }
}

/// Run one transfer of `matrix` to a fresh tag until it completes or aborts.
pub fn run_session(
    config: HostConfig,
    matrix: RecordMatrix,
    params: &SimParams,
    profile: DistanceProfile,
    seed: u64,
) -> Result<SessionResult, SimError> {
    profile.validate()?;
    let mut host = HostSession::new(config, matrix)?;
    let mut tag_config = params.tag;
    tag_config.bootloader = config.bootloader;
    let mut tag = Tag::new(tag_config, seed);
    let mut reader = Reader::new(params.reader, seed);
    let mut power = PowerModel::new(params.power, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut trace = Vec::new();

    host.start(0, &mut reader);
    let mut round = 0;
    while host.outcome().is_none() {
        round += 1;
        let d_cm = profile.distance_cm(round as f64 / params.rounds_per_sec);
        let d = params.channel.normalize(d_cm);
        let powered = power.power_step(d);
        tag.set_powered(powered);
        if params.trace_every > 0 && round % params.trace_every == 0 {
            trace.push(TracePoint { round, d_cm, powered });
        }
        reader.process_commands(round)?;
        let ctx = RoundContext {
            tag: &mut tag,
            rng: &mut rng,
            channel: &params.channel,
            d,
        };
        if let Some(report) = reader.execute_operation_round(round, ctx)? {
            host.on_report(&report, &mut reader);
        }
        host.on_round_end(round, &mut reader);
        if round >= params.max_rounds {
            host.abort(round);
        }
    }
    Ok(SessionResult {
        outcome: host.outcome().unwrap(),
        log: host.into_log(),
        rounds: round,
        tag,
        trace,
    })
}
