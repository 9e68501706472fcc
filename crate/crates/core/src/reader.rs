// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reader emulation: AccessSpec lifecycle, per-round command execution and
//! the operation report stream.
//!
//! One inventory round happens per simulation tick. Host commands reach the
//! reader after fixed latencies, and a spec deleted while active keeps
//! executing for `delete_delay` rounds unless its stop trigger fires first.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{delivery_outcome, ChannelError, ChannelParams, Delivery};
use crate::crc16::crc16;
use crate::protocol::READER_MAX_WORDS;
use crate::tag::{Epc, SeriesOutcome, Tag};

/// Payload bits of a single-word command.
pub const WORD_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReaderError {
    #[error("invalid transition: {event:?} in state {state:?}")]
    InvalidTransition { state: Option<SpecState>, event: SpecEvent },
    #[error("BlockWrite of {0} words exceeds the reader limit")]
    TooManyWords(usize),
    #[error("BlockWrite without words")]
    EmptyBlockWrite,
    #[error("no active AccessSpec")]
    NoActiveSpec,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    /// Single word; protected by CRC16.
    Write(u16),
    /// Issued by the reader as a series of single-word commands without CRC16.
    BlockWrite(Vec<u16>),
}

impl Command {
    pub fn word_count(&self) -> usize {
        match self {
            Command::Write(_) => 1,
            Command::BlockWrite(w) => w.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopTrigger {
    None,
    AfterOperationCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecState {
    Disabled,
    Active,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecEvent {
    Add,
    Enable,
    Disable,
    Delete,
    StopTriggerFired,
}

/// AccessSpec state machine. `None` is a spec not yet added.
pub fn apply_accessspec_event(state: Option<SpecState>, event: SpecEvent) -> Result<SpecState, ReaderError> {
    use SpecEvent as E;
    use SpecState as S;
    match (state, event) {
        (None, E::Add) => Ok(S::Disabled),
        (Some(S::Disabled), E::Enable) => Ok(S::Active),
        (Some(S::Active), E::Disable) => Ok(S::Disabled),
        (Some(S::Disabled | S::Active), E::Delete) => Ok(S::Halt),
        (Some(S::Active), E::StopTriggerFired) => Ok(S::Halt),
        (state, event) => Err(ReaderError::InvalidTransition { state, event }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessSpec {
    pub id: u32,
    pub command: Command,
    pub ocv: u32,
    pub stop_trigger: StopTrigger,
    state: SpecState,
    successes: u32,
}

impl AccessSpec {
    pub fn new(id: u32, command: Command, ocv: u32, stop_trigger: StopTrigger) -> Result<Self, ReaderError> {
        if let Command::BlockWrite(words) = &command {
            if words.is_empty() {
                return Err(ReaderError::EmptyBlockWrite);
            }
            if words.len() > READER_MAX_WORDS {
                return Err(ReaderError::TooManyWords(words.len()));
            }
        }
        Ok(AccessSpec {
            id,
            command,
            ocv,
            stop_trigger,
            state: apply_accessspec_event(None, SpecEvent::Add)?,
            successes: 0,
        })
    }

    pub fn state(&self) -> SpecState {
        self.state
    }

    pub fn successes(&self) -> u32 {
        self.successes
    }

    fn apply(&mut self, event: SpecEvent) -> Result<(), ReaderError> {
        self.state = apply_accessspec_event(Some(self.state), event)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpResult {
    Success,
    Error,
    NoTagSeen,
}

impl OpResult {
    pub fn as_str(self) -> &'static str {
        match self {
            OpResult::Success => "success",
            OpResult::Error => "error",
            OpResult::NoTagSeen => "no-tag-seen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationReport {
    pub spec_id: u32,
    pub result: OpResult,
    pub epc: Epc,
    pub round: u64,
}

pub fn make_report(spec_id: u32, result: OpResult, epc_at_round_start: Epc, round: u64) -> OperationReport {
    OperationReport {
        spec_id,
        result,
        epc: epc_at_round_start,
        round,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReaderParams {
    /// Mean number of rounds a spec deleted while active keeps executing.
    /// Each deletion draws its delay from a geometric distribution.
    pub delete_delay_mean: f64,
    pub delete_delay_max: u32,
    pub delete_ticks: u64,
    pub add_ticks: u64,
    pub enable_ticks: u64,
}

impl Default for ReaderParams {
    fn default() -> Self {
        ReaderParams {
            delete_delay_mean: 5.0,
            delete_delay_max: 60,
            delete_ticks: 1,
            add_ticks: 7,
            enable_ticks: 7,
        }
    }
}

#[derive(Debug, Clone)]
enum Pending {
    Delete(u32),
    Add(AccessSpec),
    Enable(u32),
}

/// What the round sees of the world: the tag and the channel at this distance.
pub struct RoundContext<'a> {
    pub tag: &'a mut Tag,
    pub rng: &'a mut ChaCha8Rng,
    pub channel: &'a ChannelParams,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct Reader {
    params: ReaderParams,
    rng: ChaCha8Rng,
    current: Option<AccessSpec>,
    lingering: Option<(AccessSpec, u32)>,
    pending: VecDeque<(u64, Pending)>,
    last_command_tick: u64,
}

impl Reader {
    pub fn new(params: ReaderParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4);
        Reader {
            params,
            rng,
            current: None,
            lingering: None,
            pending: VecDeque::new(),
            last_command_tick: 0,
        }
    }

    /// Rounds until a deletion takes effect.
    fn draw_delete_delay(&mut self) -> u32 {
        let mean = self.params.delete_delay_mean;
        if !(mean > 0.0) {
            return 0;
        }
        // geometric on {0, 1, ...}: P(D >= k) = q^k
        let q = mean / (1.0 + mean);
        let u: f64 = self.rng.random();
        let d = ((1.0 - u).ln() / q.ln()).floor();
        d.min(self.params.delete_delay_max as f64) as u32
    }

    pub fn params(&self) -> &ReaderParams {
        &self.params
    }

    pub fn current(&self) -> Option<&AccessSpec> {
        self.current.as_ref()
    }

    pub fn lingering(&self) -> Option<&AccessSpec> {
        self.lingering.as_ref().map(|(s, _)| s)
    }

    fn schedule(&mut self, now: u64, delay: u64, op: Pending) {
        let at = (now + delay).max(self.last_command_tick);
        self.last_command_tick = at;
        self.pending.push_back((at, op));
    }

    /// Replace the current spec: delete it, add `spec`, enable `spec`.
    /// The three LLRP messages are processed in order, each after its latency.
    pub fn replace_spec(&mut self, now: u64, spec: AccessSpec) {
        if let Some(cur) = &self.current {
            let id = cur.id;
            self.schedule(now, self.params.delete_ticks, Pending::Delete(id));
        }
        let id = spec.id;
        let add_at = self.params.delete_ticks + self.params.add_ticks;
        self.schedule(now, add_at, Pending::Add(spec));
        self.schedule(now, add_at + self.params.enable_ticks, Pending::Enable(id));
    }

    /// Apply host commands whose latency has elapsed.
    pub fn process_commands(&mut self, now: u64) -> Result<(), ReaderError> {
        while self.pending.front().is_some_and(|(at, _)| *at <= now) {
            let (_, op) = self.pending.pop_front().unwrap();
            match op {
                Pending::Delete(id) => self.delete(id)?,
                Pending::Add(spec) => {
                    if self.current.is_some() {
                        // single-tag design: implicit delete of a stale spec
                        let id = self.current.as_ref().unwrap().id;
                        self.delete(id)?;
                    }
                    self.current = Some(spec);
                }
                Pending::Enable(id) => {
                    if let Some(spec) = self.current.as_mut().filter(|s| s.id == id) {
                        spec.apply(SpecEvent::Enable)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn delete(&mut self, id: u32) -> Result<(), ReaderError> {
        let Some(mut spec) = self.current.take_if(|s| s.id == id) else {
            return Ok(());
        };
        let was_active = spec.state == SpecState::Active;
        spec.apply(SpecEvent::Delete)?;
        let delay = if was_active { self.draw_delete_delay() } else { 0 };
        self.lingering = (delay > 0).then_some((spec, delay));
        Ok(())
    }

    /// Execute one inventory round. Returns `None` when no spec is executing.
    pub fn execute_operation_round(
        &mut self,
        round: u64,
        ctx: RoundContext<'_>,
    ) -> Result<Option<OperationReport>, ReaderError> {
        let epc = ctx.tag.epc();
        let (spec, lingering) = match self.lingering.as_mut() {
            Some((spec, _)) => (spec, true),
            None => match self.current.as_mut().filter(|s| s.state == SpecState::Active) {
                Some(spec) => (spec, false),
                None => return Ok(None),
            },
        };

        let result = run_command(&spec.command, ctx)?;
        if result == OpResult::Success {
            spec.successes += 1;
        }
        let fired = spec.stop_trigger == StopTrigger::AfterOperationCount && spec.successes >= spec.ocv;
        let report = make_report(spec.id, result, epc, round);

        if lingering {
            let (_, remaining) = self.lingering.as_mut().unwrap();
            *remaining -= 1;
            if fired || *remaining == 0 {
                self.lingering = None;
            }
        } else if fired {
            let mut spec = self.current.take().unwrap();
            spec.apply(SpecEvent::StopTriggerFired)?;
        }
        Ok(Some(report))
    }
}

fn run_command(command: &Command, ctx: RoundContext<'_>) -> Result<OpResult, ReaderError> {
    let RoundContext { tag, rng, channel, d } = ctx;
    match command {
        Command::Write(word) => {
            let sent_crc = crc16(&word.to_be_bytes());
            match delivery_outcome(rng, channel, WORD_BITS, d, tag.powered())? {
                Delivery::Lost => Ok(OpResult::NoTagSeen),
                Delivery::Corrupted { bit } if bit >= WORD_BITS => Ok(OpResult::Error),
                outcome => {
                    let received = match outcome {
                        Delivery::Corrupted { bit } => word ^ (1 << bit),
                        _ => *word,
                    };
                    let crc_ok = crc16(&received.to_be_bytes()) == sent_crc;
                    if tag.handle_write(received, crc_ok) {
                        Ok(OpResult::Success)
                    } else {
                        Ok(OpResult::Error)
                    }
                }
            }
        }
        Command::BlockWrite(words) => {
            let mut received = Vec::with_capacity(words.len());
            for (k, &word) in words.iter().enumerate() {
                match delivery_outcome(rng, channel, WORD_BITS, d, tag.powered())? {
                    Delivery::Lost if k == 0 => return Ok(OpResult::NoTagSeen),
                    Delivery::Delivered => received.push(Some(word)),
                    Delivery::Corrupted { bit } if bit < WORD_BITS => received.push(Some(word ^ (1 << bit))),
                    _ => {
                        received.push(None);
                        break;
                    }
                }
            }
            match tag.handle_blockwrite_series(&received) {
                SeriesOutcome::Complete => Ok(OpResult::Success),
                SeriesOutcome::Partial => Ok(OpResult::Error),
            }
        }
    }
}
