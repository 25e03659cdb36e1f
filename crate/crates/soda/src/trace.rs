//! Line-oriented trace of delivery events and the replay renderer.
//!
//! Serialized form, one line per delivery: `time kind src dst dataBytes
//! summary`. Send and drop events are kept in memory for cost accounting but
//! are not part of the file format.

use crate::protocol::{Message, MessageId, MessageKind, OpId, ProcessId, Tag};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePhase {
    Sent,
    Delivered,
    /// Delivery suppressed because the destination had crashed.
    Dropped,
}

#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub time: u64,
    pub phase: TracePhase,
    pub kind: MessageKind,
    pub src: ProcessId,
    pub dst: ProcessId,
    pub data_bytes: u32,
    pub op: Option<OpId>,
    pub mid: Option<MessageId>,
    pub tag: Option<Tag>,
}

impl TraceEvent {
    pub fn from_message(
        time: u64,
        phase: TracePhase,
        src: ProcessId,
        dst: ProcessId,
        msg: &Message,
    ) -> TraceEvent {
        TraceEvent {
            time,
            phase,
            kind: msg.kind(),
            src,
            dst,
            data_bytes: msg.data_bytes() as u32,
            op: trace_op(msg),
            mid: trace_mid(msg),
            tag: trace_tag(msg),
        }
    }

    fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(op) = self.op {
            let _ = write!(s, "op={op} ");
        }
        if let Some(mid) = self.mid {
            let _ = write!(s, "mid={mid} ");
        }
        if let Some(tag) = self.tag {
            let _ = write!(s, "tag={tag} ");
        }
        if s.is_empty() {
            s.push('-');
        }
        s.trim_end().to_string()
    }
}

fn trace_op(msg: &Message) -> Option<OpId> {
    use crate::protocol::MetaMsg;
    match msg {
        Message::WriteGetTag { op }
        | Message::WriteGetTagResp { op, .. }
        | Message::ReadGetTag { op }
        | Message::ReadGetTagResp { op, .. }
        | Message::MdFull { op, .. }
        | Message::MdCoded { op, .. }
        | Message::AbdGet { op }
        | Message::AbdGetResp { op, .. }
        | Message::AbdPut { op, .. }
        | Message::AbdPutAck { op }
        | Message::AbdWriteBack { op, .. }
        | Message::AbdWriteBackAck { op } => Some(*op),
        Message::CodedToReader { read, .. } => Some(*read),
        Message::MdMeta { meta, .. } => match meta {
            MetaMsg::ReadValue { read, .. }
            | MetaMsg::ReadComplete { read, .. }
            | MetaMsg::ReadDisperse { read, .. } => Some(*read),
        },
        Message::WritePutAck { .. } => None,
    }
}

fn trace_mid(msg: &Message) -> Option<MessageId> {
    match msg {
        Message::MdFull { mid, .. }
        | Message::MdCoded { mid, .. }
        | Message::MdMeta { mid, .. } => Some(*mid),
        _ => None,
    }
}

fn trace_tag(msg: &Message) -> Option<Tag> {
    use crate::protocol::MetaMsg;
    match msg {
        Message::WriteGetTagResp { tag, .. }
        | Message::ReadGetTagResp { tag, .. }
        | Message::WritePutAck { tag }
        | Message::CodedToReader { tag, .. }
        | Message::MdFull { tag, .. }
        | Message::MdCoded { tag, .. }
        | Message::AbdGetResp { tag, .. }
        | Message::AbdPut { tag, .. }
        | Message::AbdWriteBack { tag, .. } => Some(*tag),
        Message::MdMeta { meta, .. } => match meta {
            MetaMsg::ReadValue { tr, .. } | MetaMsg::ReadComplete { tr, .. } => Some(*tr),
            MetaMsg::ReadDisperse { tag, .. } => Some(*tag),
        },
        _ => None,
    }
}

/// Serializes delivery events, one line each.
pub fn render_trace(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in trace.iter().filter(|e| e.phase == TracePhase::Delivered) {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            ev.time,
            ev.kind,
            ev.src,
            ev.dst,
            ev.data_bytes,
            ev.summary()
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("trace parse error at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub time: u64,
    pub kind: String,
    pub src: String,
    pub dst: String,
    pub data_bytes: u64,
    pub summary: String,
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| TraceParseError::Malformed { line: idx + 1, msg: msg.to_string() };
        let mut parts = line.splitn(6, ' ');
        let time = parts
            .next()
            .and_then(|t| t.parse::<u64>().ok())
            .ok_or_else(|| err("bad time field"))?;
        let kind = parts.next().ok_or_else(|| err("missing kind"))?.to_string();
        let src = parts.next().ok_or_else(|| err("missing src"))?.to_string();
        let dst = parts.next().ok_or_else(|| err("missing dst"))?.to_string();
        let data_bytes = parts
            .next()
            .and_then(|b| b.parse::<u64>().ok())
            .ok_or_else(|| err("bad dataBytes field"))?;
        let summary = parts.next().unwrap_or("-").to_string();
        out.push(TraceLine { time, kind, src, dst, data_bytes, summary });
    }
    Ok(out)
}

fn transition_note(kind: &str, dst: &str) -> String {
    match kind {
        "WRITE-GET-TAG" | "READ-GET-TAG" => format!("{dst} replies with its stored tag"),
        "WRITE-GET-TAG-RESP" => format!("{dst} folds the tag into its phase-1 maximum"),
        "READ-GET-TAG-RESP" => format!("{dst} folds the tag into its phase-1 maximum"),
        "MD-FULL" => format!("{dst} relays/codes the value, stores its element, acks"),
        "MD-CODED" => format!("{dst} delivers its coded element and acks"),
        "WRITE-PUT-ACK" => format!("{dst} counts the ack toward the write quorum"),
        "READ-VALUE" => format!("{dst} registers the read (or clears a completion sentinel)"),
        "READ-COMPLETE" => format!("{dst} unregisters the read (or stores a sentinel)"),
        "READ-DISPERSE" => format!("{dst} records the dispersal; may unregister at threshold"),
        "CODED-TO-READER" => format!("{dst} accumulates the element toward decode"),
        "ABD-GET" => format!("{dst} replies with its stored (tag, value)"),
        "ABD-GET-RESP" => format!("{dst} folds the pair into its phase-1 maximum"),
        "ABD-PUT" | "ABD-WRITE-BACK" => format!("{dst} stores the pair if newer"),
        "ABD-PUT-ACK" | "ABD-WRITE-BACK-ACK" => format!("{dst} counts the ack"),
        _ => format!("{dst} handles {kind}"),
    }
}

/// Human-readable timeline for `replay`: deterministic for a given trace.
pub fn render_replay(lines: &[TraceLine]) -> String {
    let mut out = String::new();
    let mut last_time = None;
    for l in lines {
        if last_time != Some(l.time) {
            let _ = writeln!(out, "--- t={}", l.time);
            last_time = Some(l.time);
        }
        let _ = writeln!(
            out,
            "  {} -> {} {} [{}B] {} | {}",
            l.src,
            l.dst,
            l.kind,
            l.data_bytes,
            l.summary,
            transition_note(&l.kind, &l.dst),
        );
    }
    let _ = writeln!(out, "--- quiescent after {} delivery events", lines.len());
    out
}
