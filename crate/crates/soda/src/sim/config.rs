//! Run configuration: protocol selection, dimensions, workload shape,
//! delivery model, crash and disk-error schedules.
//!
//! Two on-disk formats are accepted: flat `key = value` text (section
//! headers like `[sim]` are tolerated and ignored) and JSON.

use crate::codec::{CodeParams, CodecError};
use crate::protocol::{OpId, ProcessId, Role};
use crate::soda_err::ErrEntry;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Soda,
    SodaErr,
    Abd,
}

impl FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "soda" => Ok(Protocol::Soda),
            "soda_err" | "soda-err" | "sodaerr" => Ok(Protocol::SodaErr),
            "abd" => Ok(Protocol::Abd),
            other => Err(ConfigError::Invalid(format!("unknown protocol {other:?}"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Soda => "soda",
            Protocol::SodaErr => "soda_err",
            Protocol::Abd => "abd",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryModel {
    /// Reliable links, per-envelope delays in [1, max_delay], no ordering.
    AsyncUnordered { max_delay: u64 },
    /// Every envelope delivered within delta ticks.
    DeltaBounded { delta: u64 },
}

/// When a process stops: at a wall-clock tick, after its j-th send of any
/// kind, or after its j-th value-bearing (MD-FULL / MD-CODED) send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashPoint {
    AtTime(u64),
    AfterSends(u64),
    AfterValueSends(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub pid: ProcessId,
    pub point: CrashPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub e: usize,
    pub writers: u32,
    pub readers: u32,
    pub ops_per_client: u32,
    pub seed: u64,
    pub delivery: DeliveryModel,
    /// Enables seeded schedule mutators that bias delays to stress known
    /// races (async mode only).
    #[serde(default)]
    pub adversarial: bool,
    pub value_size: usize,
    #[serde(default)]
    pub initial_value: Option<Vec<u8>>,
    #[serde(default)]
    pub crash: Vec<CrashSpec>,
    #[serde(default)]
    pub error_schedule: Vec<ErrEntry>,
    /// Readers issue their first operation only after all writes complete.
    #[serde(default)]
    pub read_after_write: bool,
    /// Upper bound on client start jitter, drawn per client.
    #[serde(default = "default_jitter")]
    pub start_jitter: u64,
    /// Upper bound on think time between a client's operations.
    #[serde(default = "default_think")]
    pub think_max: u64,
    /// Event budget; 0 selects a generous default.
    #[serde(default)]
    pub max_events: u64,
}

fn default_jitter() -> u64 {
    3
}

fn default_think() -> u64 {
    2
}

impl SimConfig {
    pub fn new(protocol: Protocol, n: usize, f: usize) -> SimConfig {
        SimConfig {
            protocol,
            n,
            f,
            e: 0,
            writers: 1,
            readers: 1,
            ops_per_client: 1,
            seed: 0,
            delivery: DeliveryModel::AsyncUnordered { max_delay: 8 },
            adversarial: false,
            value_size: 64,
            initial_value: None,
            crash: Vec::new(),
            error_schedule: Vec::new(),
            read_after_write: false,
            start_jitter: default_jitter(),
            think_max: default_think(),
            max_events: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> SimConfig {
        self.seed = seed;
        self
    }

    pub fn code_params(&self) -> Result<CodeParams, CodecError> {
        match self.protocol {
            Protocol::Soda | Protocol::Abd => CodeParams::for_soda(self.n, self.f),
            Protocol::SodaErr => CodeParams::for_soda_err(self.n, self.f, self.e),
        }
    }

    pub fn effective_e(&self) -> usize {
        match self.protocol {
            Protocol::SodaErr => self.e,
            _ => 0,
        }
    }

    pub fn event_budget(&self) -> u64 {
        if self.max_events == 0 {
            20_000_000
        } else {
            self.max_events
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::Invalid("n must be positive".into()));
        }
        if 2 * self.f > self.n {
            return Err(ConfigError::Invalid(format!(
                "f = {} violates f <= n/2 for n = {}",
                self.f, self.n
            )));
        }
        self.code_params()?;
        if self.value_size == 0 {
            return Err(ConfigError::Invalid("value_size must be positive".into()));
        }
        if let Some(v) = &self.initial_value {
            if v.len() != self.value_size {
                return Err(ConfigError::Invalid(
                    "initial_value must match value_size".into(),
                ));
            }
        }
        if self.e > 0 && self.protocol != Protocol::SodaErr {
            return Err(ConfigError::Invalid("e > 0 requires protocol soda_err".into()));
        }
        let server_crashes =
            self.crash.iter().filter(|c| c.pid.role == Role::Server).count();
        if server_crashes > self.f {
            return Err(ConfigError::Invalid(format!(
                "{server_crashes} server crashes exceed f = {}",
                self.f
            )));
        }
        // phase-1 majorities must stay reachable under the crash schedule
        let liveness_budget = self.n - (self.n + 1).div_ceil(2);
        if server_crashes > liveness_budget {
            return Err(ConfigError::Invalid(format!(
                "{server_crashes} server crashes leave no majority alive (budget {liveness_budget})"
            )));
        }
        for c in &self.crash {
            match c.pid.role {
                Role::Server => {
                    if c.pid.ord == 0 || c.pid.ord as usize > self.n {
                        return Err(ConfigError::Invalid(format!("unknown server {}", c.pid)));
                    }
                }
                Role::Writer => {
                    if c.pid.ord == 0 || c.pid.ord > self.writers {
                        return Err(ConfigError::Invalid(format!("unknown writer {}", c.pid)));
                    }
                    if self.read_after_write {
                        return Err(ConfigError::Invalid(
                            "writer crashes cannot be combined with read_after_write".into(),
                        ));
                    }
                }
                Role::Reader => {
                    if c.pid.ord == 0 || c.pid.ord > self.readers {
                        return Err(ConfigError::Invalid(format!("unknown reader {}", c.pid)));
                    }
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.crash {
            if !seen.insert(c.pid) {
                return Err(ConfigError::Invalid(format!("duplicate crash spec for {}", c.pid)));
            }
        }
        for en in &self.error_schedule {
            if self.protocol != Protocol::SodaErr {
                return Err(ConfigError::Invalid(
                    "error schedule requires protocol soda_err".into(),
                ));
            }
            if en.server == 0 || en.server > self.n {
                return Err(ConfigError::Invalid(format!("unknown server s{}", en.server)));
            }
            if en.read.client.role != Role::Reader
                || en.read.client.ord == 0
                || en.read.client.ord > self.readers
            {
                return Err(ConfigError::Invalid(format!("unknown read op {}", en.read)));
            }
        }
        if let DeliveryModel::DeltaBounded { delta } = self.delivery {
            if delta == 0 {
                return Err(ConfigError::Invalid("delta must be at least 1".into()));
            }
        }
        if let DeliveryModel::AsyncUnordered { max_delay } = self.delivery {
            if max_delay == 0 {
                return Err(ConfigError::Invalid("max_delay must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Parses either format: JSON if the text starts with '{', key = value
    /// otherwise.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let trimmed = text.trim_start();
        let cfg = if trimmed.starts_with('{') {
            serde_json::from_str(text)?
        } else {
            Self::parse_kv(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_kv(text: &str) -> Result<SimConfig, ConfigError> {
        let mut cfg = SimConfig::new(Protocol::Soda, 5, 2);
        for (idx, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let err = |msg: String| ConfigError::Parse { line: idx + 1, msg };
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, val) = (key.trim(), val.trim());
            let parse_num = |v: &str| -> Result<u64, ConfigError> {
                v.parse::<u64>().map_err(|_| ConfigError::Parse {
                    line: idx + 1,
                    msg: format!("expected a number for {key}, got {v:?}"),
                })
            };
            match key {
                "protocol" => cfg.protocol = val.parse()?,
                "n" => cfg.n = parse_num(val)? as usize,
                "f" => cfg.f = parse_num(val)? as usize,
                "e" => cfg.e = parse_num(val)? as usize,
                "writers" => cfg.writers = parse_num(val)? as u32,
                "readers" => cfg.readers = parse_num(val)? as u32,
                "ops_per_client" | "ops" => cfg.ops_per_client = parse_num(val)? as u32,
                "seed" => cfg.seed = parse_num(val)?,
                "value_size" => cfg.value_size = parse_num(val)? as usize,
                "delivery" => cfg.delivery = parse_delivery(val, idx + 1)?,
                "max_delay" => {
                    if let DeliveryModel::AsyncUnordered { max_delay } = &mut cfg.delivery {
                        *max_delay = parse_num(val)?;
                    }
                }
                "adversarial" => cfg.adversarial = parse_bool(val, idx + 1)?,
                "read_after_write" => cfg.read_after_write = parse_bool(val, idx + 1)?,
                "start_jitter" => cfg.start_jitter = parse_num(val)?,
                "think_max" => cfg.think_max = parse_num(val)?,
                "max_events" => cfg.max_events = parse_num(val)?,
                "crash" => cfg.crash = parse_crash_list(val).map_err(&err)?,
                "error" | "error_schedule" => {
                    cfg.error_schedule = parse_error_list(val).map_err(&err)?
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// A `#` opens a comment only at line start or after whitespace, so read
/// identifiers like `r1#2` survive inside values.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

fn parse_bool(v: &str, line: usize) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Parse { line, msg: format!("expected a boolean, got {v:?}") }),
    }
}

fn parse_delivery(v: &str, line: usize) -> Result<DeliveryModel, ConfigError> {
    let v = v.trim();
    if v.eq_ignore_ascii_case("async") {
        return Ok(DeliveryModel::AsyncUnordered { max_delay: 8 });
    }
    if let Some(rest) = v.strip_prefix("delta:") {
        let delta = rest.trim().parse::<u64>().map_err(|_| ConfigError::Parse {
            line,
            msg: format!("bad delta in {v:?}"),
        })?;
        return Ok(DeliveryModel::DeltaBounded { delta });
    }
    Err(ConfigError::Parse { line, msg: format!("unknown delivery model {v:?}") })
}

/// Parses one process id like `w1`, `r2`, `s3`.
pub fn parse_pid(s: &str) -> Result<ProcessId, String> {
    let s = s.trim();
    let (role, rest) = match s.chars().next() {
        Some('w') => (Role::Writer, &s[1..]),
        Some('r') => (Role::Reader, &s[1..]),
        Some('s') => (Role::Server, &s[1..]),
        _ => return Err(format!("bad process id {s:?}")),
    };
    let ord = rest.parse::<u32>().map_err(|_| format!("bad process id {s:?}"))?;
    Ok(ProcessId { role, ord })
}

/// Crash list syntax: `s1@t=0, w1@vsends=2, r1@sends=8`.
pub fn parse_crash_list(s: &str) -> Result<Vec<CrashSpec>, String> {
    let mut out = Vec::new();
    for part in s.split([',', ';']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (pid, point) =
            part.split_once('@').ok_or_else(|| format!("expected pid@point in {part:?}"))?;
        let pid = parse_pid(pid)?;
        let (kind, val) =
            point.split_once('=').ok_or_else(|| format!("expected point=value in {part:?}"))?;
        let val = val.trim().parse::<u64>().map_err(|_| format!("bad number in {part:?}"))?;
        let point = match kind.trim() {
            "t" | "time" => CrashPoint::AtTime(val),
            "sends" => CrashPoint::AfterSends(val),
            "vsends" | "value_sends" => CrashPoint::AfterValueSends(val),
            other => return Err(format!("unknown crash point {other:?}")),
        };
        out.push(CrashSpec { pid, point });
    }
    Ok(out)
}

/// Error-schedule syntax: `s3@r1#2, s5@r2#1` (server @ read operation).
pub fn parse_error_list(s: &str) -> Result<Vec<ErrEntry>, String> {
    let mut out = Vec::new();
    for part in s.split([',', ';']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (server, read) =
            part.split_once('@').ok_or_else(|| format!("expected server@read in {part:?}"))?;
        let server_pid = parse_pid(server)?;
        if server_pid.role != Role::Server {
            return Err(format!("{server:?} is not a server"));
        }
        let (client, seq) =
            read.split_once('#').ok_or_else(|| format!("expected reader#seq in {part:?}"))?;
        let client = parse_pid(client)?;
        let seq = seq.trim().parse::<u32>().map_err(|_| format!("bad seq in {part:?}"))?;
        out.push(ErrEntry {
            server: server_pid.ord as usize,
            read: OpId { client, seq },
        });
    }
    Ok(out)
}
