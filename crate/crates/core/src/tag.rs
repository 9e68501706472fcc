// SPDX-License-Identifier: MIT OR Apache-2.0

//! Computational RFID tag: message handling, EPC echo, transient power and
//! the bootloader mode machine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::crc16::Crc16Digest;
use crate::protocol::{
    ex_checksum, ExMessage, HEADER_ADDRESS, HEADER_CRC_HIGH, HEADER_CRC_LOW, HEADER_INIT, HEADER_NEW_LINE,
    MAX_OFFSET_HEADER,
};

pub const EPC_LEN: usize = 12;
pub type Epc = [u8; EPC_LEN];

/// EPC after power-up. Never a valid echo: no Basic header is `0xFF` with
/// payload `0xFF` and no EX length byte exceeds 60.
pub const DEFAULT_INITIAL_EPC: Epc = [0xFF; EPC_LEN];

pub const FRAM_SIZE: usize = 0x1_0000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("event {event:?} not valid in mode {mode:?}")]
    InvalidEvent { mode: Mode, event: BootEvent },
}

/// Non-volatile byte-addressable memory.
#[derive(Clone, PartialEq, Eq)]
pub struct FramImage {
    bytes: Vec<u8>,
}

impl std::fmt::Debug for FramImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FramImage({} bytes)", self.bytes.len())
    }
}

impl Default for FramImage {
    fn default() -> Self {
        FramImage {
            bytes: vec![0xFF; FRAM_SIZE],
        }
    }
}

impl FramImage {
    pub fn read(&self, address: u16) -> u8 {
        self.bytes[address as usize]
    }

    pub fn write(&mut self, address: u16, value: u8) {
        self.bytes[address as usize] = value;
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// True when every `(address, byte)` pair is present.
    pub fn matches(&self, image: &[(u16, u8)]) -> bool {
        image.iter().all(|&(a, b)| self.read(a) == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Bootloader,
    Reprogram,
    Application,
    PowerFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootEvent {
    PowerOn,
    InitMessage,
    RequestApplication,
    TransferComplete { received: u16, computed: u16 },
    CrcMatch,
    CrcMismatch,
    PowerFailure,
}

pub fn bootloader_step(mode: Mode, event: BootEvent) -> Result<Mode, TagError> {
    use BootEvent as E;
    use Mode as M;
    let next = match (mode, event) {
        (_, E::PowerFailure) => M::PowerFailure,
        (M::PowerFailure, E::PowerOn) => M::Bootloader,
        (M::Bootloader | M::Reprogram, E::InitMessage) => M::Reprogram,
        (M::Bootloader, E::RequestApplication) => M::Application,
        (M::Reprogram, E::TransferComplete { received, computed }) => {
            return bootloader_step(
                mode,
                if received == computed {
                    E::CrcMatch
                } else {
                    E::CrcMismatch
                },
            );
        }
        (M::Reprogram, E::CrcMatch) => M::Application,
        (M::Reprogram, E::CrcMismatch) => M::Reprogram,
        (mode, event) => return Err(TagError::InvalidEvent { mode, event }),
    };
    Ok(next)
}

/// Two-state power process: brown-out with probability `p_b(d)` per round,
/// unpowered bursts of geometric length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Fixed per-round brown-out probability; overrides the distance law.
    pub brownout: Option<f64>,
    pub mean_burst: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            brownout: None,
            mean_burst: 3.0,
        }
    }
}

impl PowerParams {
    /// `min(0.9, 0.02 * (d / 0.6)^4)` unless a fixed value is configured.
    pub fn brownout_probability(&self, d: f64) -> f64 {
        match self.brownout {
            Some(p) => p.clamp(0.0, 1.0),
            None => (0.02 * (d / 0.6).powi(4)).min(0.9),
        }
    }

    /// Stationary unpowered fraction for a fixed brown-out probability.
    pub fn unpowered_fraction(&self, p_b: f64) -> f64 {
        let recover = 1.0 / self.mean_burst.max(1.0);
        if p_b <= 0.0 {
            0.0
        } else {
            p_b / (p_b + recover)
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerModel {
    params: PowerParams,
    rng: ChaCha8Rng,
    powered: bool,
}

impl PowerModel {
    pub fn new(params: PowerParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        PowerModel {
            params,
            rng,
            powered: true,
        }
    }

    pub fn powered(&self) -> bool {
        self.powered
    }

    /// Advance one round at normalized distance `d`.
    pub fn power_step(&mut self, d: f64) -> bool {
        let u: f64 = self.rng.random();
        self.powered = if self.powered {
            u >= self.params.brownout_probability(d)
        } else {
            u < 1.0 / self.params.mean_burst.max(1.0)
        };
        self.powered
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagConfig {
    pub initial_epc: Epc,
    /// Start in the bootloader and wait for the init message; otherwise the
    /// tag boots straight into reprogram mode.
    pub bootloader: bool,
    /// Probability that a byte written to FRAM is stored corrupted.
    pub write_fault: f64,
}

impl Default for TagConfig {
    fn default() -> Self {
        TagConfig {
            initial_epc: DEFAULT_INITIAL_EPC,
            bootloader: false,
            write_fault: 0.0,
        }
    }
}

/// State kept in non-volatile memory alongside the application image.
#[derive(Debug, Clone)]
struct Persistent {
    reprogram_requested: bool,
    app_valid: bool,
    crc_high: Option<u8>,
    written: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOutcome {
    Complete,
    Partial,
}

#[derive(Debug, Clone)]
pub struct Tag {
    config: TagConfig,
    fram: FramImage,
    persistent: Persistent,
    epc: Epc,
    powered: bool,
    mode: Mode,
    address_high: Option<u8>,
    address_low: Option<u8>,
    series: Vec<u16>,
    fault_rng: ChaCha8Rng,
}

impl Tag {
    pub fn new(config: TagConfig, seed: u64) -> Self {
        let mut fault_rng = ChaCha8Rng::seed_from_u64(seed);
        fault_rng.set_stream(3);
        let mut tag = Tag {
            config,
            fram: FramImage::default(),
            persistent: Persistent {
                reprogram_requested: !config.bootloader,
                app_valid: false,
                crc_high: None,
                written: vec![false; FRAM_SIZE],
            },
            epc: config.initial_epc,
            powered: false,
            mode: Mode::PowerFailure,
            address_high: None,
            address_low: None,
            series: Vec::new(),
            fault_rng,
        };
        tag.set_powered(true);
        tag
    }

    pub fn epc(&self) -> Epc {
        self.epc
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn powered(&self) -> bool {
        self.powered
    }

    /// Whether the stored application passed its CRC check.
    pub fn application_valid(&self) -> bool {
        self.persistent.app_valid
    }

    pub fn fram(&self) -> &FramImage {
        &self.fram
    }

    pub fn pending_series_len(&self) -> usize {
        self.series.len()
    }

    /// Apply a power transition. Losing power clears every volatile
    /// register; regaining it boots through the bootloader.
    pub fn set_powered(&mut self, powered: bool) {
        if powered == self.powered {
            return;
        }
        self.powered = powered;
        if powered {
            self.mode = bootloader_step(self.mode, BootEvent::PowerOn).unwrap_or(Mode::Bootloader);
            if self.persistent.reprogram_requested {
                self.mode = Mode::Reprogram;
            } else if self.persistent.app_valid {
                self.mode = bootloader_step(self.mode, BootEvent::RequestApplication).unwrap_or(self.mode);
            }
        } else {
            self.mode = Mode::PowerFailure;
            self.epc = self.config.initial_epc;
            self.address_high = None;
            self.address_low = None;
            self.series.clear();
        }
    }

    fn set_echo(&mut self, prefix: &[u8]) {
        self.epc = [0; EPC_LEN];
        self.epc[..prefix.len()].copy_from_slice(prefix);
    }

    fn write_verified(&mut self, address: u16, value: u8) -> u8 {
        let stored = if self.config.write_fault > 0.0 && self.fault_rng.random::<f64>() < self.config.write_fault {
            value ^ (1 << self.fault_rng.random_range(0..8))
        } else {
            value
        };
        self.fram.write(address, stored);
        self.persistent.written[address as usize] = true;
        self.fram.read(address)
    }

    /// Addresses written since reprogramming started, ascending.
    pub fn written_addresses(&self) -> impl Iterator<Item = u16> + '_ {
        self.persistent
            .written
            .iter()
            .enumerate()
            .filter(|(_, &w)| w)
            .map(|(a, _)| a as u16)
    }

    /// CRC16 over every byte written since reprogramming started, in address order.
    pub fn written_crc(&self) -> u16 {
        let mut digest = Crc16Digest::new();
        for (addr, &w) in self.persistent.written.iter().enumerate() {
            if w {
                digest.update(&[self.fram.read(addr as u16)]);
            }
        }
        digest.finalize()
    }

    /// Handle one Write. Returns whether the tag replied; a failed CRC or an
    /// unpowered tag stays silent.
    pub fn handle_write(&mut self, word: u16, crc_ok: bool) -> bool {
        if !self.powered || !crc_ok {
            return false;
        }
        let [header, payload] = word.to_be_bytes();
        match (self.mode, header) {
            (Mode::Bootloader | Mode::Reprogram, HEADER_INIT) => {
                if self.mode == Mode::Bootloader {
                    self.persistent.written.iter_mut().for_each(|w| *w = false);
                    self.persistent.crc_high = None;
                    self.persistent.app_valid = false;
                }
                self.persistent.reprogram_requested = true;
                self.mode = bootloader_step(self.mode, BootEvent::InitMessage).expect("init valid here");
                self.set_echo(&[header, payload]);
            }
            (Mode::Reprogram, HEADER_NEW_LINE) => {
                self.address_high = Some(payload);
                self.set_echo(&[header, payload]);
            }
            (Mode::Reprogram, HEADER_ADDRESS) => {
                self.address_low = Some(payload);
                self.set_echo(&[header, payload]);
            }
            (Mode::Reprogram, offset @ 0..=MAX_OFFSET_HEADER) => {
                if let (Some(hi), Some(lo)) = (self.address_high, self.address_low) {
                    let address = u16::from_be_bytes([hi, lo]).wrapping_add(offset as u16);
                    let read_back = self.write_verified(address, payload);
                    self.set_echo(&[header, read_back]);
                }
            }
            (Mode::Reprogram, HEADER_CRC_HIGH) => {
                self.persistent.crc_high = Some(payload);
                self.set_echo(&[header, payload]);
            }
            (Mode::Reprogram, HEADER_CRC_LOW) => {
                if let Some(hi) = self.persistent.crc_high {
                    let received = u16::from_be_bytes([hi, payload]);
                    let computed = self.written_crc();
                    let event = BootEvent::TransferComplete { received, computed };
                    self.mode = bootloader_step(self.mode, event).expect("reprogram accepts completion");
                    if self.mode == Mode::Application {
                        self.persistent.reprogram_requested = false;
                        self.persistent.app_valid = true;
                        self.set_echo(&[header, payload]);
                    }
                }
            }
            _ => {}
        }
        true
    }

    /// Handle a BlockWrite series delivered as single-word commands. `None`
    /// marks the first word the tag never received; nothing after it counts.
    pub fn handle_blockwrite_series(&mut self, words: &[Option<u16>]) -> SeriesOutcome {
        self.series.clear();
        if !self.powered {
            return SeriesOutcome::Partial;
        }
        for w in words {
            match w {
                Some(w) => self.series.push(*w),
                None => {
                    self.series.clear();
                    return SeriesOutcome::Partial;
                }
            }
        }
        let words = std::mem::take(&mut self.series);
        if self.mode != Mode::Reprogram {
            return SeriesOutcome::Complete;
        }
        let Some(msg) = ExMessage::from_words(&words) else {
            return SeriesOutcome::Complete;
        };
        if !msg.verify() {
            return SeriesOutcome::Complete;
        }
        let mut read_back = msg.clone();
        for (k, &b) in msg.data.iter().enumerate() {
            let address = msg.address.wrapping_add(k as u16);
            read_back.data[k] = self.write_verified(address, b);
        }
        if ex_checksum(&read_back.checked_bytes()) == msg.checksum {
            self.set_echo(&msg.header());
        }
        SeriesOutcome::Complete
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ihex::Chunk;
    use crate::protocol::build_ex_message;

    fn tag() -> Tag {
        Tag::new(TagConfig::default(), 1)
    }

    #[test]
    fn basic_handling_sequence() {
        let mut t = tag();
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC);
        assert!(t.handle_write(0xFDAA, true));
        assert_eq!(&t.epc()[..2], &[0xFD, 0xAA]);
        assert!(t.epc()[2..].iter().all(|&b| b == 0));
        t.handle_write(0xFEDD, true);
        t.handle_write(0x00BB, true);
        assert_eq!(t.fram().read(0xAADD), 0xBB);
        assert_eq!(&t.epc()[..2], &[0x00, 0xBB]);
        t.handle_write(0x01CC, true);
        assert_eq!(t.fram().read(0xAADE), 0xCC);
    }

    #[test]
    fn bad_crc_changes_nothing() {
        let mut t = tag();
        t.handle_write(0xFDAA, true);
        let before = t.epc();
        assert!(!t.handle_write(0xFE11, false));
        assert_eq!(t.epc(), before);
    }

    #[test]
    fn data_without_address_is_ignored() {
        let mut t = tag();
        t.handle_write(0xFDAA, true);
        t.set_powered(false);
        t.set_powered(true);
        t.handle_write(0xFEDD, true);
        assert!(t.handle_write(0x0055, true));
        assert_eq!(&t.epc()[..2], &[0xFE, 0xDD]);
        assert_eq!(t.fram().read(0xAADD), 0xFF);
    }

    fn ex(address: u16, data: Vec<u8>) -> ExMessage {
        build_ex_message(&Chunk { address, data }, 16).unwrap()
    }

    #[test]
    fn complete_series_sets_header_echo() {
        let mut t = tag();
        let msg = ex(0x4400, vec![1, 2, 3, 4]);
        let words: Vec<_> = msg.to_words().into_iter().map(Some).collect();
        assert_eq!(t.handle_blockwrite_series(&words), SeriesOutcome::Complete);
        assert_eq!(&t.epc()[..4], &msg.header());
        assert!(t.epc()[4..].iter().all(|&b| b == 0));
        assert_eq!(
            (0..4).map(|k| t.fram().read(0x4400 + k)).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );

        // re-delivery is idempotent
        let snapshot = t.fram().clone();
        t.handle_blockwrite_series(&words);
        assert_eq!(t.fram(), &snapshot);
        assert_eq!(&t.epc()[..4], &msg.header());
    }

    #[test]
    fn partial_series_leaves_epc() {
        let mut t = tag();
        let msg = ex(0x4400, vec![9, 9]);
        let mut words: Vec<_> = msg.to_words().into_iter().map(Some).collect();
        words[2] = None;
        assert_eq!(t.handle_blockwrite_series(&words), SeriesOutcome::Partial);
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC);
        assert_eq!(t.pending_series_len(), 0);
    }

    #[test]
    fn corrupted_byte_is_not_acknowledged() {
        let mut t = tag();
        let msg = ex(0x5000, vec![0x10, 0x20, 0x30]);
        let mut words = msg.to_words();
        words[2] ^= 0x0100;
        let words: Vec<_> = words.into_iter().map(Some).collect();
        assert_eq!(t.handle_blockwrite_series(&words), SeriesOutcome::Complete);
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC);
        assert_eq!(t.fram().read(0x5000), 0xFF);
        // oracle: the corrupted message fails the checksum
        let mut bad = msg.clone();
        bad.data[0] ^= 0x01;
        assert_ne!(ex_checksum(&bad.checked_bytes()), bad.checksum);
    }

    #[test]
    fn write_fault_detected_by_read_back() {
        let mut t = Tag::new(
            TagConfig {
                write_fault: 1.0,
                ..Default::default()
            },
            5,
        );
        let msg = ex(0x6000, vec![0xAB, 0xCD]);
        let words: Vec<_> = msg.to_words().into_iter().map(Some).collect();
        t.handle_blockwrite_series(&words);
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC);
        t.handle_write(0xFD60, true);
        t.handle_write(0xFE00, true);
        t.handle_write(0x0011, true);
        assert_eq!(t.epc()[0], 0x00);
        assert_ne!(t.epc()[1], 0x11);
    }

    #[test]
    fn power_loss_splits_volatile_and_persistent() {
        let mut t = tag();
        let msg = ex(0x4400, vec![7, 8]);
        let words: Vec<_> = msg.to_words().into_iter().map(Some).collect();
        t.handle_blockwrite_series(&words);
        let fram = t.fram().clone();
        t.set_powered(false);
        assert_eq!(t.mode(), Mode::PowerFailure);
        assert!(!t.handle_write(0xFD00, true));
        t.set_powered(true);
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC);
        assert_eq!(t.fram(), &fram);
        assert_eq!(t.mode(), Mode::Reprogram);
    }

    #[test]
    fn bootloader_edges() {
        assert_eq!(
            bootloader_step(Mode::Bootloader, BootEvent::InitMessage),
            Ok(Mode::Reprogram)
        );
        assert_eq!(
            bootloader_step(
                Mode::Reprogram,
                BootEvent::TransferComplete {
                    received: 7,
                    computed: 7
                }
            ),
            Ok(Mode::Application)
        );
        assert_eq!(
            bootloader_step(
                Mode::Reprogram,
                BootEvent::TransferComplete {
                    received: 7,
                    computed: 8
                }
            ),
            Ok(Mode::Reprogram)
        );
        let failed = bootloader_step(Mode::Application, BootEvent::PowerFailure).unwrap();
        assert_eq!(failed, Mode::PowerFailure);
        assert_eq!(bootloader_step(failed, BootEvent::PowerOn), Ok(Mode::Bootloader));
        assert_eq!(
            bootloader_step(Mode::Bootloader, BootEvent::RequestApplication),
            Ok(Mode::Application)
        );
        assert!(bootloader_step(Mode::Application, BootEvent::InitMessage).is_err());
        assert!(bootloader_step(Mode::Bootloader, BootEvent::CrcMatch).is_err());
    }

    #[test]
    fn bootloader_flow_through_tag() {
        let mut t = Tag::new(
            TagConfig {
                bootloader: true,
                ..Default::default()
            },
            1,
        );
        assert_eq!(t.mode(), Mode::Bootloader);
        let msg = ex(0x4400, vec![1, 2, 3]);
        let words: Vec<_> = msg.to_words().into_iter().map(Some).collect();
        t.handle_blockwrite_series(&words);
        assert_eq!(t.epc(), DEFAULT_INITIAL_EPC, "data ignored before init");

        t.handle_write(0xFF01, true);
        assert_eq!(t.mode(), Mode::Reprogram);
        t.handle_blockwrite_series(&words);
        t.set_powered(false);
        t.set_powered(true);
        assert_eq!(t.mode(), Mode::Reprogram, "reprogram request survives power loss");

        let crc = crate::crc16::crc16(&[1, 2, 3]);
        let [hi, lo] = crc.to_be_bytes();
        t.handle_write(u16::from_be_bytes([HEADER_CRC_HIGH, hi.wrapping_add(1)]), true);
        t.handle_write(u16::from_be_bytes([HEADER_CRC_LOW, lo]), true);
        assert_eq!(t.mode(), Mode::Reprogram);
        assert_ne!(t.epc()[0], HEADER_CRC_LOW);

        t.handle_write(u16::from_be_bytes([HEADER_CRC_HIGH, hi]), true);
        t.handle_write(u16::from_be_bytes([HEADER_CRC_LOW, lo]), true);
        assert_eq!(t.mode(), Mode::Application);
        assert_eq!(&t.epc()[..2], &[HEADER_CRC_LOW, lo]);

        t.set_powered(false);
        t.set_powered(true);
        assert_eq!(t.mode(), Mode::Application);
    }

    #[test]
    fn power_model_without_brownouts() {
        let mut pm = PowerModel::new(
            PowerParams {
                brownout: Some(0.0),
                ..Default::default()
            },
            7,
        );
        assert!((0..1000).all(|_| pm.power_step(0.9)));
    }

    #[test]
    fn power_model_matches_stationary_fraction() {
        let params = PowerParams {
            brownout: Some(0.1),
            ..Default::default()
        };
        let mut pm = PowerModel::new(params, 7);
        let rounds = 50_000;
        let off = (0..rounds).filter(|_| !pm.power_step(0.5)).count();
        let expect = params.unpowered_fraction(0.1);
        assert!((expect - 0.1 / (0.1 + 1.0 / 3.0)).abs() < 1e-12);
        let got = off as f64 / rounds as f64;
        assert!((got - expect).abs() < 0.01, "{got} vs {expect}");
    }

    #[test]
    fn power_model_is_deterministic() {
        let run = || {
            let mut pm = PowerModel::new(PowerParams::default(), 11);
            (0..500)
                .map(|r| pm.power_step(0.3 + r as f64 / 1000.0))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn distance_law_for_brownouts() {
        let p = PowerParams::default();
        assert!((p.brownout_probability(0.6) - 0.02).abs() < 1e-15);
        assert!((p.brownout_probability(0.3) - 0.02 / 16.0).abs() < 1e-15);
        assert_eq!(p.brownout_probability(5.0), 0.9);
    }
}
