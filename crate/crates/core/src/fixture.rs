// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic transfer images used by tests, examples and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ihex::{RecordMatrix, Row};

/// Size of the firmware image in bytes.
pub const FIRMWARE_BYTES: usize = 5387;

/// Program sections of the firmware image: (load address, size).
const SECTIONS: [(u16, usize); 4] = [(0x4400, 4480), (0x5600, 640), (0x5900, 160), (0x5A00, 31)];
/// Interrupt vectors, each emitted as its own two-byte record ending at 0xFFFF.
const VECTORS: usize = 38;

fn filled_rows(rng: &mut ChaCha8Rng, address: u16, size: usize, row_len: usize) -> Vec<Row> {
    let mut data = vec![0u8; size];
    rng.fill(&mut data[..]);
    data.chunks(row_len)
        .enumerate()
        .map(|(k, chunk)| Row::new(address + (k * row_len) as u16, chunk.to_vec()))
        .collect()
}

/// A sectioned firmware image of 32-byte records plus a vector table.
pub fn firmware() -> RecordMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5715);
    let mut rows = Vec::new();
    for (address, size) in SECTIONS {
        rows.extend(filled_rows(&mut rng, address, size, 32));
    }
    let first = 0x1_0000 - 2 * VECTORS;
    for k in 0..VECTORS {
        let target: u16 = 0x4400 + 2 * rng.random_range(0..2240u16);
        rows.push(Row::new((first + 2 * k) as u16, target.to_le_bytes().to_vec()));
    }
    RecordMatrix::new(rows).expect("fixture rows are valid")
}

/// `bytes` of random data in consecutive records of `row_len` bytes.
pub fn random_image(bytes: usize, row_len: usize, seed: u64) -> RecordMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RecordMatrix::new(filled_rows(&mut rng, 0x4400, bytes, row_len)).expect("fixture rows are valid")
}
