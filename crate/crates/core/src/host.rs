// SPDX-License-Identifier: MIT OR Apache-2.0

//! The host side of a transfer: message dispatch through AccessSpecs,
//! ACK/NACK classification on the echoed EPC, timeouts, resends and
//! payload throttling.

use std::fmt::Write as _;

use thiserror::Error;

use crate::crc16::Crc16Digest;
use crate::ihex::RecordMatrix;
use crate::protocol::{
    build_basic_messages, build_ex_message, build_ladder, next_message, rechunk, BasicMessage, Direction,
    MessageCursor, ProtocolError, ThrottleLadder, ThrottleParams, ThrottleState, HEADER_CRC_HIGH, HEADER_CRC_LOW,
    HEADER_INIT, READER_MAX_WORDS,
};
use crate::reader::{AccessSpec, Command, OpResult, OperationReport, Reader, StopTrigger};
use crate::tag::{Epc, EPC_LEN};

/// Payload byte of the init message.
pub const INIT_PAYLOAD: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HostError {
    #[error("OCV {ocv} exceeds N_threshold {n_threshold}")]
    OcvExceedsThreshold { ocv: u32, n_threshold: u32 },
    #[error("N_threshold must be positive")]
    ZeroThreshold,
    #[error("R_max must be positive")]
    ZeroResends,
    #[error("payload size {0} words is outside 1..=30")]
    InvalidPayload(usize),
    #[error("nothing to transfer")]
    EmptyMatrix,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Basic,
    Ex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadMode {
    Fixed(usize),
    Throttle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostConfig {
    pub variant: Variant,
    pub payload: PayloadMode,
    pub ocv: u32,
    pub n_threshold: u32,
    pub throttle: ThrottleParams,
    pub s_max: usize,
    /// Wrap the data in init and CRC16 control messages for the bootloader.
    pub bootloader: bool,
    /// Reject OCV above N_threshold. Off only to study the overlap flood.
    pub check_ocv: bool,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            variant: Variant::Ex,
            payload: PayloadMode::Throttle,
            ocv: 15,
            n_threshold: 20,
            throttle: ThrottleParams::default(),
            s_max: 16,
            bootloader: false,
            check_ocv: true,
        }
    }
}

impl HostConfig {
    pub fn validate(&self) -> Result<(), HostError> {
        if self.n_threshold == 0 {
            return Err(HostError::ZeroThreshold);
        }
        if self.check_ocv && self.ocv > self.n_threshold {
            return Err(HostError::OcvExceedsThreshold {
                ocv: self.ocv,
                n_threshold: self.n_threshold,
            });
        }
        if self.throttle.r_max == 0 {
            return Err(HostError::ZeroResends);
        }
        let max_words = READER_MAX_WORDS - 2;
        if self.variant == Variant::Ex {
            match self.payload {
                PayloadMode::Fixed(s) if s == 0 || s > max_words => return Err(HostError::InvalidPayload(s)),
                PayloadMode::Throttle => {
                    self.throttle.validate()?;
                    if self.s_max == 0 || self.s_max > max_words {
                        return Err(HostError::InvalidPayload(self.s_max));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ack,
    Nack,
}

/// ACK iff the echoed EPC equals the verification data of the message in flight.
pub fn classify_report(expected: &Epc, report: &OperationReport) -> Verdict {
    if &report.epc == expected {
        Verdict::Ack
    } else {
        Verdict::Nack
    }
}

pub fn echo_of(prefix: &[u8]) -> Epc {
    let mut epc = [0; EPC_LEN];
    epc[..prefix.len()].copy_from_slice(prefix);
    epc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutKind {
    Lost,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Sent,
    Ack,
    Nack,
    Timeout(TimeoutKind),
    Resend,
    ThrottleChange { old: usize, new: usize },
    Abort,
    Complete,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Sent => "message-sent",
            EventKind::Ack => "ack",
            EventKind::Nack => "nack",
            EventKind::Timeout(_) => "timeout",
            EventKind::Resend => "resend",
            EventKind::ThrottleChange { .. } => "throttle-change",
            EventKind::Abort => "abort",
            EventKind::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEvent {
    pub round: u64,
    pub kind: EventKind,
    /// 1-based row and chunk of the message; 0 for control messages.
    pub i: usize,
    pub j: usize,
    /// Payload of the message in words.
    pub s_p: f64,
    pub result: Option<OpResult>,
    pub epc: Option<Epc>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferLog {
    events: Vec<LogEvent>,
}

pub const LOG_CSV_HEADER: &str = "round,event,i,j,S_p,result,epc-hex";

impl TransferLog {
    pub fn push(&mut self, event: LogEvent) {
        debug_assert!(self.events.last().is_none_or(|e| e.round <= event.round));
        self.events.push(event);
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * self.events.len() + 64);
        out.push_str(LOG_CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            let result = match (&e.kind, e.result) {
                (EventKind::Timeout(TimeoutKind::Lost), _) => "lost".to_string(),
                (EventKind::Timeout(TimeoutKind::Error), _) => "error".to_string(),
                (EventKind::ThrottleChange { old, .. }, _) => format!("from {old}"),
                (_, Some(r)) => r.as_str().to_string(),
                _ => String::new(),
            };
            let epc: String = e
                .epc
                .map(|epc| epc.iter().map(|b| format!("{b:02X}")).collect())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.round,
                e.kind.name(),
                e.i,
                e.j,
                e.s_p,
                result,
                epc
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOutcome {
    Complete,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Init,
    Data,
    CrcHigh,
    CrcLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BasicCursor {
    Start,
    At { row: usize, k: usize },
    Done,
}

#[derive(Debug, Clone)]
struct InFlight {
    command: Command,
    expected: Epc,
    i: usize,
    j: usize,
    s_p: f64,
}

#[derive(Debug, Clone)]
pub struct HostSession {
    config: HostConfig,
    matrix: RecordMatrix,
    basic: Vec<Vec<BasicMessage>>,
    ladder: ThrottleLadder,
    throttle: Option<ThrottleState>,
    phase: Phase,
    ex_cursor: MessageCursor,
    basic_cursor: BasicCursor,
    current: Option<InFlight>,
    r_count: u32,
    nack_count: u32,
    window_lost: u32,
    window_total: u32,
    last_activity: u64,
    next_spec_id: u32,
    crc: u16,
    log: TransferLog,
    outcome: Option<SessionOutcome>,
}

impl HostSession {
    pub fn new(config: HostConfig, matrix: RecordMatrix) -> Result<Self, HostError> {
        config.validate()?;
        if matrix.total_bytes() == 0 {
            return Err(HostError::EmptyMatrix);
        }
        let basic = match config.variant {
            Variant::Basic => matrix
                .rows()
                .iter()
                .map(build_basic_messages)
                .collect::<Result<_, _>>()?,
            Variant::Ex => Vec::new(),
        };
        let s_r = matrix.rows().iter().map(|r| r.words()).max().unwrap_or(1);
        let ladder = build_ladder(s_r, config.s_max);
        let throttle = (config.variant == Variant::Ex && config.payload == PayloadMode::Throttle).then(|| {
            let mut t = ThrottleState::new(config.s_max, config.throttle);
            t.s_p = ladder.snap(config.s_max);
            t
        });
        let mut digest = Crc16Digest::new();
        for (_, b) in matrix.image() {
            digest.update(&[b]);
        }
        Ok(HostSession {
            config,
            basic,
            ladder,
            throttle,
            phase: if config.bootloader { Phase::Init } else { Phase::Data },
            ex_cursor: MessageCursor::Start,
            basic_cursor: BasicCursor::Start,
            current: None,
            r_count: 0,
            nack_count: 0,
            window_lost: 0,
            window_total: 0,
            last_activity: 0,
            next_spec_id: 1,
            crc: digest.finalize(),
            log: TransferLog::default(),
            outcome: None,
            matrix,
        })
    }

    pub fn config(&self) -> &HostConfig {
        &self.config
    }

    pub fn log(&self) -> &TransferLog {
        &self.log
    }

    pub fn into_log(self) -> TransferLog {
        self.log
    }

    pub fn outcome(&self) -> Option<SessionOutcome> {
        self.outcome
    }

    pub fn ladder(&self) -> &ThrottleLadder {
        &self.ladder
    }

    /// Current throttled payload size, if throttling.
    pub fn throttled_s_p(&self) -> Option<usize> {
        self.throttle.as_ref().map(|t| t.s_p)
    }

    /// CRC16 the tag must compute over the transferred image.
    pub fn image_crc(&self) -> u16 {
        self.crc
    }

    /// Rounds of report silence that count as a lost-type timeout.
    pub fn silence_limit(&self) -> u64 {
        3 * self.config.n_threshold as u64
    }

    fn payload_words(&self) -> usize {
        match (self.throttle.as_ref(), self.config.payload) {
            (Some(t), _) => t.s_p,
            (None, PayloadMode::Fixed(s)) => s,
            (None, PayloadMode::Throttle) => self.config.s_max,
        }
    }

    pub fn start(&mut self, round: u64, reader: &mut Reader) {
        self.last_activity = round;
        self.advance(round, reader);
    }

    /// Move to the next message and send it, or finish.
    fn advance(&mut self, round: u64, reader: &mut Reader) {
        let next = loop {
            match self.phase {
                Phase::Init => break Some(self.control(HEADER_INIT, INIT_PAYLOAD)),
                Phase::Data => match self.next_data() {
                    Some(m) => break Some(m),
                    None if self.config.bootloader => self.phase = Phase::CrcHigh,
                    None => break None,
                },
                Phase::CrcHigh => break Some(self.control(HEADER_CRC_HIGH, (self.crc >> 8) as u8)),
                Phase::CrcLow => break Some(self.control(HEADER_CRC_LOW, self.crc as u8)),
            }
        };
        match next {
            Some(m) => {
                self.current = Some(m);
                self.send(round, reader, EventKind::Sent);
            }
            None => self.finish(round, SessionOutcome::Complete),
        }
    }

    fn control(&self, header: u8, payload: u8) -> InFlight {
        let m = BasicMessage::new(header, payload);
        InFlight {
            command: Command::Write(m.word()),
            expected: echo_of(&m.echo()),
            i: 0,
            j: 0,
            s_p: 0.5,
        }
    }

    fn next_data(&mut self) -> Option<InFlight> {
        match self.config.variant {
            Variant::Basic => {
                let next = match self.basic_cursor {
                    BasicCursor::Start => first_basic_from(&self.basic, 0),
                    BasicCursor::At { row, k } if k + 1 < self.basic[row].len() => BasicCursor::At { row, k: k + 1 },
                    BasicCursor::At { row, .. } => first_basic_from(&self.basic, row + 1),
                    BasicCursor::Done => BasicCursor::Done,
                };
                self.basic_cursor = next;
                let BasicCursor::At { row, k } = next else { return None };
                let m = self.basic[row][k];
                Some(InFlight {
                    command: Command::Write(m.word()),
                    expected: echo_of(&m.echo()),
                    i: row + 1,
                    j: k + 1,
                    s_p: 0.5,
                })
            }
            Variant::Ex => {
                let (chunk, cursor) = next_message(self.ex_cursor, &self.matrix, self.payload_words());
                self.ex_cursor = cursor;
                chunk.map(|c| self.ex_in_flight(&c))
            }
        }
    }

    fn ex_in_flight(&self, chunk: &crate::ihex::Chunk) -> InFlight {
        let msg = build_ex_message(chunk, self.payload_words()).expect("chunk sized within payload bound");
        let (i, j) = self.ex_cursor.indices();
        InFlight {
            command: Command::BlockWrite(msg.to_words()),
            expected: echo_of(&msg.header()),
            i,
            j,
            s_p: chunk.data.len() as f64 / 2.0,
        }
    }

    fn send(&mut self, round: u64, reader: &mut Reader, kind: EventKind) {
        let m = self.current.as_ref().expect("message in flight");
        let spec = AccessSpec::new(
            self.next_spec_id,
            m.command.clone(),
            self.config.ocv,
            StopTrigger::AfterOperationCount,
        )
        .expect("messages fit the reader limit");
        self.next_spec_id += 1;
        reader.replace_spec(round, spec);
        self.log.push(LogEvent {
            round,
            kind,
            i: m.i,
            j: m.j,
            s_p: m.s_p,
            result: None,
            epc: None,
        });
        self.reset_window(round);
    }

    fn reset_window(&mut self, round: u64) {
        self.nack_count = 0;
        self.window_lost = 0;
        self.window_total = 0;
        self.last_activity = round;
    }

    /// Give up on the transfer from outside, e.g. at a round budget.
    pub fn abort(&mut self, round: u64) {
        if self.outcome.is_none() {
            self.finish(round, SessionOutcome::Failure);
        }
    }

    fn finish(&mut self, round: u64, outcome: SessionOutcome) {
        self.current = None;
        self.outcome = Some(outcome);
        let kind = match outcome {
            SessionOutcome::Complete => EventKind::Complete,
            SessionOutcome::Failure => EventKind::Abort,
        };
        self.log.push(LogEvent {
            round,
            kind,
            i: 0,
            j: 0,
            s_p: 0.0,
            result: None,
            epc: None,
        });
    }

    fn log_report(&mut self, kind: EventKind, report: &OperationReport) {
        let m = self.current.as_ref().unwrap();
        let event = LogEvent {
            round: report.round,
            kind,
            i: m.i,
            j: m.j,
            s_p: m.s_p,
            result: Some(report.result),
            epc: Some(report.epc),
        };
        self.log.push(event);
    }

    fn log_throttle(&mut self, round: u64, change: Option<usize>, old: usize) {
        if let Some(new) = change {
            self.log.push(LogEvent {
                round,
                kind: EventKind::ThrottleChange { old, new },
                i: 0,
                j: 0,
                s_p: new as f64,
                result: None,
                epc: None,
            });
        }
    }

    pub fn on_report(&mut self, report: &OperationReport, reader: &mut Reader) {
        if self.outcome.is_some() {
            return;
        }
        let Some(m) = &self.current else { return };
        let round = report.round;
        self.last_activity = round;
        match classify_report(&m.expected, report) {
            Verdict::Ack => {
                self.log_report(EventKind::Ack, report);
                self.r_count = 0;
                if let Some(t) = self.throttle.as_mut() {
                    let old = t.s_p;
                    let change = t.on_ack(&self.ladder);
                    self.log_throttle(round, change, old);
                }
                self.phase = match self.phase {
                    Phase::Init => Phase::Data,
                    Phase::CrcHigh => Phase::CrcLow,
                    Phase::CrcLow => {
                        self.finish(round, SessionOutcome::Complete);
                        return;
                    }
                    Phase::Data => Phase::Data,
                };
                self.advance(round, reader);
            }
            Verdict::Nack => {
                self.log_report(EventKind::Nack, report);
                self.nack_count += 1;
                self.window_total += 1;
                if report.result == OpResult::NoTagSeen {
                    self.window_lost += 1;
                }
                if self.nack_count >= self.config.n_threshold {
                    self.timeout(round, reader);
                }
            }
        }
    }

    /// End-of-round hook: raises a timeout when the report stream went silent.
    pub fn on_round_end(&mut self, round: u64, reader: &mut Reader) {
        if self.outcome.is_none() && round.saturating_sub(self.last_activity) >= self.silence_limit() {
            self.timeout(round, reader);
        }
    }

    fn timeout(&mut self, round: u64, reader: &mut Reader) {
        let kind = if self.window_total == 0 || 2 * self.window_lost > self.window_total {
            TimeoutKind::Lost
        } else {
            TimeoutKind::Error
        };
        let (i, j, s_p) = self.current.as_ref().map(|m| (m.i, m.j, m.s_p)).unwrap();
        self.log.push(LogEvent {
            round,
            kind: EventKind::Timeout(kind),
            i,
            j,
            s_p,
            result: None,
            epc: None,
        });
        if self.r_count >= self.config.throttle.r_max {
            self.finish(round, SessionOutcome::Failure);
            return;
        }
        self.r_count += 1;
        let resized = match self.throttle.as_mut() {
            Some(t) => {
                let direction = match kind {
                    TimeoutKind::Lost => Direction::DownLost,
                    TimeoutKind::Error => Direction::DownError,
                };
                let old = t.s_p;
                let change = t.on_timeout(&self.ladder, direction);
                self.log_throttle(round, change, old);
                change.is_some()
            }
            None => false,
        };
        if resized && self.phase == Phase::Data {
            let (chunk, cursor) = rechunk(self.ex_cursor, &self.matrix, self.payload_words());
            self.ex_cursor = cursor;
            let chunk = chunk.expect("data message in flight");
            self.current = Some(self.ex_in_flight(&chunk));
        }
        self.send(round, reader, EventKind::Resend);
    }
}

fn first_basic_from(basic: &[Vec<BasicMessage>], row: usize) -> BasicCursor {
    match (row..basic.len()).find(|&r| !basic[r].is_empty()) {
        Some(row) => BasicCursor::At { row, k: 0 },
        None => BasicCursor::Done,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ihex::{parse_file, Row};
    use crate::reader::ReaderParams;

    fn one_record() -> RecordMatrix {
        parse_file(":02AADD00BBCCF0\n:00000001FF\n").unwrap()
    }

    fn report(epc: Epc, result: OpResult, round: u64) -> OperationReport {
        OperationReport {
            spec_id: 1,
            result,
            epc,
            round,
        }
    }

    #[test]
    fn config_validation() {
        assert!(HostConfig::default().validate().is_ok());
        let c = HostConfig {
            ocv: 25,
            ..Default::default()
        };
        assert_eq!(
            c.validate(),
            Err(HostError::OcvExceedsThreshold {
                ocv: 25,
                n_threshold: 20
            })
        );
        let c = HostConfig {
            throttle: ThrottleParams {
                t_de: -4,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = HostConfig {
            payload: PayloadMode::Fixed(31),
            ..Default::default()
        };
        assert_eq!(c.validate(), Err(HostError::InvalidPayload(31)));
    }

    #[test]
    fn classification() {
        let expected = echo_of(&[0xC0, 0x04, 0xAA, 0xDD]);
        assert_eq!(
            classify_report(&expected, &report(expected, OpResult::Success, 0)),
            Verdict::Ack
        );
        assert_eq!(
            classify_report(&expected, &report(expected, OpResult::Error, 0)),
            Verdict::Ack
        );
        let previous = echo_of(&[0xFE, 0xDD]);
        assert_eq!(
            classify_report(&expected, &report(previous, OpResult::Success, 0)),
            Verdict::Nack
        );
    }

    /// Feed every sent message's ACK back immediately.
    fn drive_acks(session: &mut HostSession) -> Vec<Command> {
        let mut reader = Reader::new(ReaderParams::default(), 1);
        session.start(0, &mut reader);
        let mut sent = Vec::new();
        let mut round = 0;
        while session.outcome().is_none() {
            round += 1;
            let m = session.current.clone().unwrap();
            sent.push(m.command.clone());
            session.on_report(&report(m.expected, OpResult::Success, round), &mut reader);
        }
        sent
    }

    #[test]
    fn basic_sequence_for_one_record() {
        let config = HostConfig {
            variant: Variant::Basic,
            ..Default::default()
        };
        let mut s = HostSession::new(config, one_record()).unwrap();
        let sent = drive_acks(&mut s);
        let words: Vec<u16> = sent
            .iter()
            .map(|c| match c {
                Command::Write(w) => *w,
                _ => panic!("Basic only writes"),
            })
            .collect();
        assert_eq!(words, vec![0xFDAA, 0xFEDD, 0x00BB, 0x01CC]);
        assert_eq!(s.outcome(), Some(SessionOutcome::Complete));
    }

    #[test]
    fn bootloader_wraps_data_in_control_messages() {
        let config = HostConfig {
            bootloader: true,
            payload: PayloadMode::Fixed(16),
            ..Default::default()
        };
        let mut s = HostSession::new(config, one_record()).unwrap();
        let crc = s.image_crc();
        assert_eq!(crc, crate::crc16::crc16(&[0xBB, 0xCC]));
        let sent = drive_acks(&mut s);
        assert_eq!(sent.len(), 4);
        assert_eq!(sent[0], Command::Write(0xFF01));
        assert!(matches!(sent[1], Command::BlockWrite(_)));
        assert_eq!(sent[2], Command::Write(0xFB00 | (crc >> 8)));
        assert_eq!(sent[3], Command::Write(0xFC00 | (crc & 0xFF)));
    }

    #[test]
    fn timeouts_then_abort() {
        let config = HostConfig {
            payload: PayloadMode::Fixed(4),
            ..Default::default()
        };
        let mut s = HostSession::new(config, one_record()).unwrap();
        let mut reader = Reader::new(ReaderParams::default(), 1);
        s.start(0, &mut reader);
        let mut round = 0;
        while s.outcome().is_none() {
            round += 1;
            s.on_report(&report(DEFAULT_EPC, OpResult::NoTagSeen, round), &mut reader);
        }
        let log = s.log();
        assert_eq!(s.outcome(), Some(SessionOutcome::Failure));
        assert_eq!(log.count(|k| matches!(k, EventKind::Sent)), 1);
        assert_eq!(log.count(|k| matches!(k, EventKind::Resend)), 3);
        assert_eq!(log.count(|k| matches!(k, EventKind::Timeout(TimeoutKind::Lost))), 4);
        assert_eq!(round, 4 * 20);
    }

    const DEFAULT_EPC: Epc = [0xFF; EPC_LEN];

    #[test]
    fn silence_raises_timeout() {
        let mut s = HostSession::new(HostConfig::default(), one_record()).unwrap();
        let mut reader = Reader::new(ReaderParams::default(), 1);
        s.start(0, &mut reader);
        for round in 1..60 {
            s.on_round_end(round, &mut reader);
        }
        assert_eq!(s.log().count(|k| matches!(k, EventKind::Timeout(_))), 0);
        s.on_round_end(60, &mut reader);
        assert_eq!(s.log().count(|k| matches!(k, EventKind::Timeout(TimeoutKind::Lost))), 1);
    }

    #[test]
    fn error_timeouts_throttle_down_and_rechunk() {
        let rows = vec![Row::new(0x1000, (0..32).collect())];
        let matrix = RecordMatrix::new(rows).unwrap();
        let mut s = HostSession::new(HostConfig::default(), matrix).unwrap();
        assert_eq!(s.ladder().values(), &[1, 2, 3, 4, 6, 8, 16]);
        let mut reader = Reader::new(ReaderParams::default(), 1);
        s.start(0, &mut reader);
        assert_eq!(s.current.as_ref().unwrap().command.word_count(), 2 + 16);
        for round in 1..=20 {
            s.on_report(&report(DEFAULT_EPC, OpResult::Error, round), &mut reader);
        }
        assert_eq!(s.throttled_s_p(), Some(6));
        assert_eq!(s.current.as_ref().unwrap().command.word_count(), 2 + 6);
        assert_eq!((s.current.as_ref().unwrap().i, s.current.as_ref().unwrap().j), (1, 1));
    }

    #[test]
    fn ack_streak_throttles_up() {
        let rows = vec![Row::new(0, vec![0x11; 32]); 1];
        let matrix = RecordMatrix::new(rows).unwrap();
        let config = HostConfig {
            s_max: 2,
            ..Default::default()
        };
        let mut s = HostSession::new(config, matrix).unwrap();
        assert_eq!(s.throttled_s_p(), Some(2));
        s.throttle.as_mut().unwrap().s_p = 1;
        drive_acks(&mut s);
        let ups: Vec<_> = s
            .log()
            .events()
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::ThrottleChange { old, new } => Some((old, new)),
                _ => None,
            })
            .collect();
        // the 12th ACK sees M_count = 11 > 10
        assert_eq!(ups, vec![(1, 2)]);
        let acks_before = s
            .log()
            .events()
            .iter()
            .take_while(|e| !matches!(e.kind, EventKind::ThrottleChange { .. }))
            .filter(|e| e.kind == EventKind::Ack)
            .count();
        assert_eq!(acks_before, 12);
    }

    #[test]
    fn csv_shape() {
        let config = HostConfig {
            variant: Variant::Basic,
            ..Default::default()
        };
        let mut s = HostSession::new(config, one_record()).unwrap();
        drive_acks(&mut s);
        let csv = s.log().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LOG_CSV_HEADER));
        assert_eq!(lines.next(), Some("0,message-sent,1,1,0.5,,"));
        assert_eq!(lines.next(), Some("1,ack,1,1,0.5,success,FDAA00000000000000000000"));
        assert_eq!(csv.lines().last(), Some("4,complete,0,0,0,,"));
    }
}
