// SPDX-License-Identifier: MIT OR Apache-2.0

//! CRC16-CCITT (polynomial 0x1021, init 0xFFFF, no reflection, no final xor).

use crc::{Crc, CRC_16_IBM_3740};

const CCITT: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT.checksum(bytes)
}

/// Incremental form, for data that is not contiguous in memory.
pub struct Crc16Digest(crc::Digest<'static, u16>);

impl Crc16Digest {
    pub fn new() -> Self {
        Crc16Digest(CCITT.digest())
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn finalize(self) -> u16 {
        self.0.finalize()
    }
}

impl Default for Crc16Digest {
    fn default() -> Self {
        Self::new()
    }
}
