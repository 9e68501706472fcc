// SPDX-License-Identifier: MIT OR Apache-2.0

//! Message construction, sequencing and payload-size throttling.

use thiserror::Error;

use crate::ihex::{record_checksum, Chunk, RecordMatrix, Row};

/// Basic header announcing a new row; payload is the first address byte.
pub const HEADER_NEW_LINE: u8 = 0xFD;
/// Basic header carrying the second address byte.
pub const HEADER_ADDRESS: u8 = 0xFE;
/// Highest Basic data-offset header.
pub const MAX_OFFSET_HEADER: u8 = 0x20;
/// Control Write asking the bootloader to enter reprogram mode.
pub const HEADER_INIT: u8 = 0xFF;
/// Control Write carrying the high byte of the whole-image CRC16.
pub const HEADER_CRC_HIGH: u8 = 0xFB;
/// Control Write carrying the low byte of the whole-image CRC16; completes the transfer.
pub const HEADER_CRC_LOW: u8 = 0xFC;

/// Largest payload the reader will carry in one BlockWrite, in words.
pub const READER_MAX_WORDS: usize = 32;
pub const DEFAULT_S_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("row of {0} bytes does not fit the Basic offset header range")]
    RowTooLong(usize),
    #[error("payload of {len} bytes exceeds the {max}-byte limit")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("empty payload")]
    EmptyPayload,
    #[error("throttle steps violate T_U < |T_DE| <= |T_DL| with T_DE, T_DL < 0 < T_U")]
    InvalidThrottleSteps,
}

/// One-word Wisent Basic message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasicMessage {
    pub header: u8,
    pub payload: u8,
}

impl BasicMessage {
    pub fn new(header: u8, payload: u8) -> Self {
        BasicMessage { header, payload }
    }

    pub fn word(self) -> u16 {
        u16::from_be_bytes([self.header, self.payload])
    }

    pub fn from_word(word: u16) -> Self {
        let [header, payload] = word.to_be_bytes();
        BasicMessage { header, payload }
    }

    /// EPC prefix the tag backscatters after handling this message.
    pub fn echo(self) -> [u8; 2] {
        [self.header, self.payload]
    }
}

/// `FD`/`FE` address messages followed by one offset-tagged message per data byte.
pub fn build_basic_messages(row: &Row) -> Result<Vec<BasicMessage>, ProtocolError> {
    if row.data.len() > MAX_OFFSET_HEADER as usize + 1 {
        return Err(ProtocolError::RowTooLong(row.data.len()));
    }
    let [first, second] = row.address.to_be_bytes();
    let mut out = Vec::with_capacity(row.data.len() + 2);
    out.push(BasicMessage::new(HEADER_NEW_LINE, first));
    out.push(BasicMessage::new(HEADER_ADDRESS, second));
    out.extend(
        row.data
            .iter()
            .enumerate()
            .map(|(offset, &b)| BasicMessage::new(offset as u8, b)),
    );
    Ok(out)
}

/// Same rule as the Intel Hex record checksum.
pub fn ex_checksum(bytes: &[u8]) -> u8 {
    record_checksum(bytes)
}

/// Wisent EX message: `c | l | address(2) | data(l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExMessage {
    pub checksum: u8,
    pub length: u8,
    pub address: u16,
    pub data: Vec<u8>,
}

impl ExMessage {
    /// Header bytes, also the EPC prefix the tag sets on success.
    pub fn header(&self) -> [u8; 4] {
        let [hi, lo] = self.address.to_be_bytes();
        [self.checksum, self.length, hi, lo]
    }

    /// Bytes covered by the checksum: everything but `c`.
    pub fn checked_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(3 + self.data.len());
        bytes.push(self.length);
        bytes.extend_from_slice(&self.address.to_be_bytes());
        bytes.extend_from_slice(&self.data);
        bytes
    }

    pub fn verify(&self) -> bool {
        self.data.len() == self.length as usize && ex_checksum(&self.checked_bytes()) == self.checksum
    }

    pub fn payload_words(&self) -> usize {
        self.data.len().div_ceil(2)
    }

    /// BlockWrite content: two header words then the payload, odd byte padded.
    pub fn to_words(&self) -> Vec<u16> {
        let header = self.header();
        let mut words = vec![
            u16::from_be_bytes([header[0], header[1]]),
            u16::from_be_bytes([header[2], header[3]]),
        ];
        words.extend(
            self.data
                .chunks(2)
                .map(|p| u16::from_be_bytes([p[0], p.get(1).copied().unwrap_or(0)])),
        );
        words
    }

    /// Reassemble from BlockWrite words. `None` when the header is
    /// incomplete or the word count disagrees with `l`.
    pub fn from_words(words: &[u16]) -> Option<Self> {
        if words.len() < 2 {
            return None;
        }
        let [checksum, length] = words[0].to_be_bytes();
        let address = words[1];
        if words.len() != 2 + (length as usize).div_ceil(2) {
            return None;
        }
        let mut data: Vec<u8> = words[2..].iter().flat_map(|w| w.to_be_bytes()).collect();
        data.truncate(length as usize);
        Some(ExMessage {
            checksum,
            length,
            address,
            data,
        })
    }
}

pub fn build_ex_message(chunk: &Chunk, s_max: usize) -> Result<ExMessage, ProtocolError> {
    let max = 2 * s_max.min(READER_MAX_WORDS - 2);
    if chunk.data.is_empty() {
        return Err(ProtocolError::EmptyPayload);
    }
    if chunk.data.len() > max {
        return Err(ProtocolError::PayloadTooLarge {
            len: chunk.data.len(),
            max,
        });
    }
    let mut msg = ExMessage {
        checksum: 0,
        length: chunk.data.len() as u8,
        address: chunk.address,
        data: chunk.data.clone(),
    };
    msg.checksum = ex_checksum(&msg.checked_bytes());
    Ok(msg)
}

/// Position in the record matrix. `offset`/`len` locate the current chunk
/// in bytes, so a row can be re-chunked at a different payload size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageCursor {
    Start,
    At {
        row: usize,
        chunk: usize,
        offset: usize,
        len: usize,
    },
    Done,
}

impl MessageCursor {
    pub fn is_done(&self) -> bool {
        matches!(self, MessageCursor::Done)
    }

    /// 1-based `(i, j)` as used in transfer logs, `(0, 0)` outside a row.
    pub fn indices(&self) -> (usize, usize) {
        match *self {
            MessageCursor::At { row, chunk, .. } => (row + 1, chunk + 1),
            _ => (0, 0),
        }
    }
}

fn chunk_at(matrix: &RecordMatrix, row: usize, chunk: usize, offset: usize, bytes: usize) -> (Chunk, MessageCursor) {
    let r = &matrix.rows()[row];
    let len = bytes.min(r.data.len() - offset);
    let c = Chunk {
        address: r.address.wrapping_add(offset as u16),
        data: r.data[offset..offset + len].to_vec(),
    };
    (
        c,
        MessageCursor::At {
            row,
            chunk,
            offset,
            len,
        },
    )
}

fn first_chunk_from(matrix: &RecordMatrix, from_row: usize, bytes: usize) -> (Option<Chunk>, MessageCursor) {
    match (from_row..matrix.len()).find(|&i| !matrix.rows()[i].data.is_empty()) {
        Some(i) => {
            let (c, cur) = chunk_at(matrix, i, 0, 0, bytes);
            (Some(c), cur)
        }
        None => (None, MessageCursor::Done),
    }
}

/// Advance to the next chunk at payload size `s_p` words. Rows without
/// data carry nothing to send and are skipped.
pub fn next_message(cursor: MessageCursor, matrix: &RecordMatrix, s_p: usize) -> (Option<Chunk>, MessageCursor) {
    let bytes = 2 * s_p.max(1);
    match cursor {
        MessageCursor::Start => first_chunk_from(matrix, 0, bytes),
        MessageCursor::At {
            row,
            chunk,
            offset,
            len,
        } => {
            let next = offset + len;
            if next < matrix.rows()[row].data.len() {
                let (c, cur) = chunk_at(matrix, row, chunk + 1, next, bytes);
                (Some(c), cur)
            } else {
                first_chunk_from(matrix, row + 1, bytes)
            }
        }
        MessageCursor::Done => (None, MessageCursor::Done),
    }
}

/// The chunk under `cursor`, re-cut at payload size `s_p` from the same offset.
pub fn rechunk(cursor: MessageCursor, matrix: &RecordMatrix, s_p: usize) -> (Option<Chunk>, MessageCursor) {
    match cursor {
        MessageCursor::At { row, chunk, offset, .. } => {
            let (c, cur) = chunk_at(matrix, row, chunk, offset, 2 * s_p.max(1));
            (Some(c), cur)
        }
        other => (None, other),
    }
}

/// Admissible payload sizes for a row, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThrottleLadder {
    values: Vec<usize>,
}

pub fn build_ladder(s_r: usize, s_max: usize) -> ThrottleLadder {
    let s_r = s_r.max(1);
    let mut values: Vec<usize> = (1..=s_r)
        .map(|n| s_r.div_ceil(n))
        .filter(|&v| v <= s_max.max(1))
        .collect();
    values.sort_unstable();
    values.dedup();
    ThrottleLadder { values }
}

impl ThrottleLadder {
    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> usize {
        self.values[0]
    }

    pub fn max(&self) -> usize {
        *self.values.last().unwrap()
    }

    /// 1-based position of `s_p`.
    pub fn index_of(&self, s_p: usize) -> Option<usize> {
        self.values.iter().position(|&v| v == s_p).map(|i| i + 1)
    }

    /// Largest rung not above `s_p`, or the bottom rung.
    pub fn snap(&self, s_p: usize) -> usize {
        self.values
            .iter()
            .rev()
            .copied()
            .find(|&v| v <= s_p)
            .unwrap_or(self.min())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    DownError,
    DownLost,
}

/// Index steps and thresholds of the adaptive payload size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrottleParams {
    pub t_u: i32,
    pub t_de: i32,
    pub t_dl: i32,
    pub m_threshold: u32,
    pub r_max: u32,
}

impl Default for ThrottleParams {
    fn default() -> Self {
        ThrottleParams {
            t_u: 1,
            t_de: -2,
            t_dl: -3,
            m_threshold: 10,
            r_max: 3,
        }
    }
}

impl ThrottleParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let ok = self.t_u > 0
            && self.t_de < 0
            && self.t_dl < 0
            && self.t_u < self.t_de.abs()
            && self.t_de.abs() <= self.t_dl.abs();
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::InvalidThrottleSteps)
        }
    }

    pub fn step(&self, direction: Direction) -> i32 {
        match direction {
            Direction::Up => self.t_u,
            Direction::DownError => self.t_de,
            Direction::DownLost => self.t_dl,
        }
    }
}

/// Move `s_p` along the ladder by the index step for `direction`,
/// clamping at both ends. A size not on the ladder is snapped first.
pub fn throttle(s_p: usize, ladder: &ThrottleLadder, direction: Direction, params: &ThrottleParams) -> usize {
    let current = ladder.snap(s_p);
    let idx = ladder.index_of(current).unwrap() as i64;
    let next = (idx + params.step(direction) as i64).clamp(1, ladder.len() as i64);
    ladder.values()[(next - 1) as usize]
}

/// Resends needed for repeated down-error steps to walk from the top of the
/// ladder to the bottom; at least one.
pub fn derive_r_max(ladder_len: usize, t_de: i32) -> u32 {
    let step = t_de.unsigned_abs().max(1) as usize;
    let needed = ladder_len.saturating_sub(1).div_ceil(step);
    needed.max(1) as u32
}

/// Host-side counters of Protocol 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThrottleState {
    pub s_p: usize,
    pub m_count: u32,
    pub r_count: u32,
    pub params: ThrottleParams,
}

impl ThrottleState {
    pub fn new(s_max: usize, params: ThrottleParams) -> Self {
        ThrottleState {
            s_p: s_max,
            m_count: 0,
            r_count: 0,
            params,
        }
    }

    /// ACK: clears resends; throttles up once the streak exceeds the threshold.
    /// Returns the new size when it changed.
    pub fn on_ack(&mut self, ladder: &ThrottleLadder) -> Option<usize> {
        self.r_count = 0;
        if self.m_count > self.params.m_threshold {
            self.m_count = 0;
            let old = ladder.snap(self.s_p);
            self.s_p = throttle(old, ladder, Direction::Up, &self.params);
            (self.s_p != old).then_some(self.s_p)
        } else {
            self.m_count += 1;
            None
        }
    }

    /// Timeout: counts a resend, clears the streak and throttles down.
    pub fn on_timeout(&mut self, ladder: &ThrottleLadder, direction: Direction) -> Option<usize> {
        self.r_count += 1;
        self.m_count = 0;
        let old = ladder.snap(self.s_p);
        self.s_p = throttle(old, ladder, direction, &self.params);
        (self.s_p != old).then_some(self.s_p)
    }
}
