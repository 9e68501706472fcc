// SPDX-License-Identifier: MIT OR Apache-2.0

//! Intel Hex parsing, encoding and chunking.
//!
//! Only data (`00`) and end-of-file (`01`) records are supported; every data
//! record becomes one row of a [`RecordMatrix`]. Addresses are 16 bit.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IhexError {
    #[error("malformed record: {0}")]
    MalformedRecord(&'static str),
    #[error("checksum mismatch: record says {expected:#04x}, computed {computed:#04x}")]
    ChecksumMismatch { expected: u8, computed: u8 },
    #[error("byte count {declared} does not match {actual} data bytes")]
    LengthMismatch { declared: u8, actual: usize },
    #[error("unsupported record type {0:#04x}")]
    UnsupportedRecordType(u8),
    #[error("record data runs past the 16-bit address space")]
    AddressOverflow,
    #[error("missing end-of-file record")]
    MissingEof,
    #[error("record found after end-of-file record")]
    RecordAfterEof,
    #[error("cannot chunk an empty row")]
    EmptyRow,
    #[error("chunk size must be at least one word")]
    ZeroChunkSize,
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<IhexError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordType {
    Data,
    EndOfFile,
}

impl RecordType {
    pub fn code(self) -> u8 {
        match self {
            RecordType::Data => 0x00,
            RecordType::EndOfFile => 0x01,
        }
    }

    fn from_code(code: u8) -> Result<Self, IhexError> {
        match code {
            0x00 => Ok(RecordType::Data),
            0x01 => Ok(RecordType::EndOfFile),
            other => Err(IhexError::UnsupportedRecordType(other)),
        }
    }
}

/// One decoded `:llaaaatt dd.. cc` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexRecord {
    pub byte_count: u8,
    pub address: u16,
    pub record_type: RecordType,
    pub data: Vec<u8>,
    pub checksum: u8,
}

impl HexRecord {
    pub fn data(address: u16, data: Vec<u8>) -> Self {
        Self::build(address, RecordType::Data, data)
    }

    pub fn eof() -> Self {
        Self::build(0, RecordType::EndOfFile, Vec::new())
    }

    fn build(address: u16, record_type: RecordType, data: Vec<u8>) -> Self {
        assert!(data.len() <= 255, "record data limited to 255 bytes");
        let byte_count = data.len() as u8;
        let checksum = record_checksum(&header_and_data(byte_count, address, record_type, &data));
        HexRecord {
            byte_count,
            address,
            record_type,
            data,
            checksum,
        }
    }

    /// Uppercase text form, without line terminator.
    pub fn to_line(&self) -> String {
        let mut line = String::with_capacity(11 + 2 * self.data.len());
        line.push(':');
        let bytes = header_and_data(self.byte_count, self.address, self.record_type, &self.data);
        for b in bytes.iter().chain(std::iter::once(&self.checksum)) {
            let _ = write!(line, "{b:02X}");
        }
        line
    }
}

fn header_and_data(byte_count: u8, address: u16, record_type: RecordType, data: &[u8]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(4 + data.len());
    bytes.push(byte_count);
    bytes.extend_from_slice(&address.to_be_bytes());
    bytes.push(record_type.code());
    bytes.extend_from_slice(data);
    bytes
}

/// Two's complement of the least significant byte of the byte sum.
pub fn record_checksum(bytes: &[u8]) -> u8 {
    let sum = bytes.iter().fold(0u8, |acc, &b| acc.wrapping_add(b));
    sum.wrapping_neg()
}

pub fn parse_record(line: &str) -> Result<HexRecord, IhexError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let digits = line
        .strip_prefix(':')
        .ok_or(IhexError::MalformedRecord("record does not start with ':'"))?;
    if digits.len() % 2 != 0 {
        return Err(IhexError::MalformedRecord("odd number of hex digits"));
    }
    if digits.len() < 10 {
        return Err(IhexError::MalformedRecord("record shorter than header and checksum"));
    }
    let bytes = decode_hex(digits)?;

    let (body, checksum) = bytes.split_at(bytes.len() - 1);
    let checksum = checksum[0];
    let byte_count = body[0];
    let address = u16::from_be_bytes([body[1], body[2]]);
    let data = &body[4..];
    if data.len() != byte_count as usize {
        return Err(IhexError::LengthMismatch {
            declared: byte_count,
            actual: data.len(),
        });
    }
    let computed = record_checksum(body);
    if computed != checksum {
        return Err(IhexError::ChecksumMismatch {
            expected: checksum,
            computed,
        });
    }
    let record_type = RecordType::from_code(body[3])?;

    Ok(HexRecord {
        byte_count,
        address,
        record_type,
        data: data.to_vec(),
        checksum,
    })
}

fn decode_hex(digits: &str) -> Result<Vec<u8>, IhexError> {
    fn nibble(c: u8) -> Result<u8, IhexError> {
        match c {
            b'0'..=b'9' => Ok(c - b'0'),
            b'a'..=b'f' => Ok(c - b'a' + 10),
            b'A'..=b'F' => Ok(c - b'A' + 10),
            _ => Err(IhexError::MalformedRecord("non-hex character")),
        }
    }
    digits
        .as_bytes()
        .chunks_exact(2)
        .map(|pair| Ok((nibble(pair[0])? << 4) | nibble(pair[1])?))
        .collect()
}

/// A data record reduced to what the transfer needs: destination and bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub address: u16,
    pub data: Vec<u8>,
}

impl Row {
    pub fn new(address: u16, data: Vec<u8>) -> Self {
        Row { address, data }
    }

    /// Row size in 16-bit words, rounding an odd trailing byte up.
    pub fn words(&self) -> usize {
        self.data.len().div_ceil(2)
    }
}

/// Ordered data rows of an Intel Hex file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordMatrix {
    rows: Vec<Row>,
}

impl RecordMatrix {
    pub fn new(rows: Vec<Row>) -> Result<Self, IhexError> {
        for row in &rows {
            if row.data.len() > 255 {
                return Err(IhexError::LengthMismatch {
                    declared: 255,
                    actual: row.data.len(),
                });
            }
            if row.address as usize + row.data.len() > 0x1_0000 {
                return Err(IhexError::AddressOverflow);
            }
        }
        Ok(RecordMatrix { rows })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> Option<&Row> {
        self.rows.get(i)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_bytes(&self) -> usize {
        self.rows.iter().map(|r| r.data.len()).sum()
    }

    /// Memory image the file describes: `(address, byte)` in ascending
    /// address order. Later rows override earlier ones at the same address.
    pub fn image(&self) -> Vec<(u16, u8)> {
        let mut map = std::collections::BTreeMap::new();
        for row in &self.rows {
            for (k, &b) in row.data.iter().enumerate() {
                map.insert(row.address.wrapping_add(k as u16), b);
            }
        }
        map.into_iter().collect()
    }

    /// Uppercase Intel Hex text, one record per line, terminated by EOF.
    pub fn to_hex_string(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&HexRecord::data(row.address, row.data.clone()).to_line());
            out.push('\n');
        }
        out.push_str(&HexRecord::eof().to_line());
        out.push('\n');
        out
    }
}

pub fn parse_file(text: &str) -> Result<RecordMatrix, IhexError> {
    let mut rows = Vec::new();
    let mut seen_eof = false;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at_line = |source: IhexError| IhexError::AtLine {
            line: idx + 1,
            source: Box::new(source),
        };
        if seen_eof {
            return Err(at_line(IhexError::RecordAfterEof));
        }
        let record = parse_record(line).map_err(at_line)?;
        match record.record_type {
            RecordType::Data => {
                if record.address as usize + record.data.len() > 0x1_0000 {
                    return Err(at_line(IhexError::AddressOverflow));
                }
                rows.push(Row::new(record.address, record.data));
            }
            RecordType::EndOfFile => seen_eof = true,
        }
    }
    if !seen_eof {
        return Err(IhexError::MissingEof);
    }
    Ok(RecordMatrix { rows })
}

/// Payload granularity: single bytes (Wisent Basic) or whole words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkSize {
    Byte,
    Words(usize),
}

impl ChunkSize {
    pub fn bytes(self) -> usize {
        match self {
            ChunkSize::Byte => 1,
            ChunkSize::Words(w) => 2 * w,
        }
    }
}

/// Slice of a row with its destination address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub address: u16,
    pub data: Vec<u8>,
}

impl Chunk {
    /// True when the last word carries a pad byte that must not be written.
    pub fn padded(&self) -> bool {
        self.data.len() % 2 == 1
    }

    /// Big-endian words, the trailing odd byte padded with `0x00`.
    pub fn words(&self) -> Vec<u16> {
        self.data
            .chunks(2)
            .map(|p| u16::from_be_bytes([p[0], p.get(1).copied().unwrap_or(0)]))
            .collect()
    }
}

/// Split a row into consecutive chunks of `size`, the last one possibly short.
pub fn chunk_record(row: &Row, size: ChunkSize) -> Result<Vec<Chunk>, IhexError> {
    if row.data.is_empty() {
        return Err(IhexError::EmptyRow);
    }
    let step = size.bytes();
    if step == 0 {
        return Err(IhexError::ZeroChunkSize);
    }
    Ok(row
        .data
        .chunks(step)
        .enumerate()
        .map(|(j, part)| Chunk {
            address: row.address.wrapping_add((j * step) as u16),
            data: part.to_vec(),
        })
        .collect())
}
