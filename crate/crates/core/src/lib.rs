// SPDX-License-Identifier: MIT OR Apache-2.0

//! Firmware transfer to batteryless RFID sensor tags over standard
//! EPC Gen2 commands, with the channel, tag and reader simulated.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod crc16;
pub mod fixture;
pub mod host;
pub mod ihex;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod reader;
pub mod scenario;
pub mod sim;
pub mod tag;
