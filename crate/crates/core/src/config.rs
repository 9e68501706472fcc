// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scenario configuration: flat `key = value` lines, `#` starts a comment.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::host::{HostConfig, HostError, PayloadMode, Variant};
use crate::sim::{DistanceProfile, SimError, SimParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("`hex` and `fixture` are mutually exclusive")]
    ConflictingSource,
    #[error("repeat must be at least 1")]
    ZeroRepeat,
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Hex(PathBuf),
    Firmware,
    Random { bytes: usize, row_len: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub host: HostConfig,
    pub source: Source,
    pub profile: DistanceProfile,
    pub sim: SimParams,
    pub seed: u64,
    pub repeat: u32,
}

const KEYS: &[&str] = &[
    "variant",
    "hex",
    "fixture",
    "payload",
    "ocv",
    "n_threshold",
    "r_max",
    "m_threshold",
    "t_u",
    "t_de",
    "t_dl",
    "s_max",
    "bootloader",
    "profile",
    "distance_cm",
    "min_cm",
    "max_cm",
    "speed",
    "d_ref",
    "k_miss",
    "d_miss",
    "brownout",
    "mean_burst",
    "write_fault",
    "delete_delay_mean",
    "rounds_per_sec",
    "max_rounds",
    "trace_every",
    "seed",
    "repeat",
];

struct Entries {
    items: Vec<(usize, String, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.items
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, v)| (*l, v.as_str()))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            }),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn invalid(&self, key: &str) -> ConfigError {
        let (line, value) = self.raw(key).unwrap_or((0, ""));
        ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        items.push((line, key.to_string(), value.to_string()));
    }
    Ok(Entries { items })
}

impl ScenarioConfig {
    /// Parse config text. Relative hex paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let e = tokenize(text)?;
        let d = HostConfig::default();

        let variant = match e.raw("variant").map(|(_, v)| v) {
            None | Some("ex") => Variant::Ex,
            Some("basic") => Variant::Basic,
            Some(_) => return Err(e.invalid("variant")),
        };
        let payload = match e.raw("payload").map(|(_, v)| v) {
            None | Some("throttle") => PayloadMode::Throttle,
            Some(v) => PayloadMode::Fixed(v.parse().map_err(|_| e.invalid("payload"))?),
        };
        let mut host = HostConfig {
            variant,
            payload,
            ocv: e.or("ocv", d.ocv)?,
            n_threshold: e.or("n_threshold", d.n_threshold)?,
            s_max: e.or("s_max", d.s_max)?,
            bootloader: e.or("bootloader", d.bootloader)?,
            ..d
        };
        host.throttle.r_max = e.or("r_max", d.throttle.r_max)?;
        host.throttle.m_threshold = e.or("m_threshold", d.throttle.m_threshold)?;
        host.throttle.t_u = e.or("t_u", d.throttle.t_u)?;
        host.throttle.t_de = e.or("t_de", d.throttle.t_de)?;
        host.throttle.t_dl = e.or("t_dl", d.throttle.t_dl)?;
        host.validate()?;

        let source = match (e.raw("hex"), e.raw("fixture")) {
            (Some(_), Some(_)) => return Err(ConfigError::ConflictingSource),
            (Some((_, path)), None) => Source::Hex(base_dir.join(path)),
            (None, Some((_, "firmware"))) => Source::Firmware,
            (None, Some((_, "random"))) => Source::Random {
                bytes: 5120,
                row_len: 32,
                seed: 1,
            },
            (None, Some(_)) => return Err(e.invalid("fixture")),
            (None, None) => return Err(ConfigError::Missing("hex")),
        };

        let profile = match e.raw("profile").map(|(_, v)| v) {
            None | Some("static") => DistanceProfile::Static {
                d_cm: e.or("distance_cm", 20.0)?,
            },
            Some("oscillate") => DistanceProfile::Oscillate {
                min_cm: e.or("min_cm", 20.0)?,
                max_cm: e.or("max_cm", 90.0)?,
                speed: e.or("speed", 0.1)?,
            },
            Some(_) => return Err(e.invalid("profile")),
        };
        profile.validate()?;

        let mut sim = SimParams::default();
        sim.channel.d_ref_cm = e.or("d_ref", sim.channel.d_ref_cm)?;
        sim.channel.k_miss = e.or("k_miss", sim.channel.k_miss)?;
        sim.channel.d_miss_cm = e.or("d_miss", sim.channel.d_miss_cm)?;
        if !(sim.channel.d_ref_cm > 0.0) {
            return Err(e.invalid("d_ref"));
        }
        if !(sim.channel.d_miss_cm > 0.0) {
            return Err(e.invalid("d_miss"));
        }
        if !(sim.channel.k_miss >= 0.0) {
            return Err(e.invalid("k_miss"));
        }
        sim.power.brownout = e.get("brownout")?;
        if sim.power.brownout.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(e.invalid("brownout"));
        }
        sim.power.mean_burst = e.or("mean_burst", sim.power.mean_burst)?;
        sim.tag.write_fault = e.or("write_fault", sim.tag.write_fault)?;
        if !(0.0..=1.0).contains(&sim.tag.write_fault) {
            return Err(e.invalid("write_fault"));
        }
        sim.reader.delete_delay_mean = e.or("delete_delay_mean", sim.reader.delete_delay_mean)?;
        sim.rounds_per_sec = e.or("rounds_per_sec", sim.rounds_per_sec)?;
        if !(sim.rounds_per_sec > 0.0) {
            return Err(e.invalid("rounds_per_sec"));
        }
        sim.max_rounds = e.or("max_rounds", sim.max_rounds)?;
        sim.trace_every = e.or("trace_every", sim.trace_every)?;

        let repeat = e.or("repeat", 1u32)?;
        if repeat == 0 {
            return Err(ConfigError::ZeroRepeat);
        }
        Ok(ScenarioConfig {
            host,
            source,
            profile,
            sim,
            seed: e.or("seed", 1)?,
            repeat,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|err| ConfigError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
