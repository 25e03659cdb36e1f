//! Shared protocol domain types: tags, process identities, operation ids and
//! the message grammar with its payload-size accounting.

use crate::codec::{CodedElement, Value};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Writer identity. Ordinal 0 is the reserved bottom id used only by the
/// initial tag, so a sentinel tag can never collide with a real write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WriterId(pub u32);

impl WriterId {
    pub const BOTTOM: WriterId = WriterId(0);
}

/// Version identifier: totally ordered lexicographically by (z, w).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub z: u64,
    pub w: WriterId,
}

impl Tag {
    /// t0: the initial tag, also used as the sentinel in history sets.
    pub const INITIAL: Tag = Tag { z: 0, w: WriterId::BOTTOM };

    /// Next tag for writer `w` after observing `tmax`.
    pub fn next(tmax: Tag, w: WriterId) -> Tag {
        Tag { z: tmax.z + 1, w }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},w{})", self.z, self.w.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Writer,
    Reader,
    Server,
}

impl Role {
    fn prefix(self) -> char {
        match self {
            Role::Writer => 'w',
            Role::Reader => 'r',
            Role::Server => 's',
        }
    }
}

/// Process identity. Server ordinals 1..=n define the fixed server ordering
/// s_1 < s_2 < ... < s_n that message-disperse relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProcessId {
    pub role: Role,
    pub ord: u32,
}

impl ProcessId {
    pub fn writer(ord: u32) -> ProcessId {
        ProcessId { role: Role::Writer, ord }
    }

    pub fn reader(ord: u32) -> ProcessId {
        ProcessId { role: Role::Reader, ord }
    }

    pub fn server(ord: u32) -> ProcessId {
        ProcessId { role: Role::Server, ord }
    }

    /// 1-based server index; panics for clients.
    pub fn server_index(&self) -> usize {
        assert_eq!(self.role, Role::Server);
        self.ord as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.role.prefix(), self.ord)
    }
}

/// Operation identity: (client, per-client sequence number). Distinct reads
/// by the same reader carry distinct `seq`, which is what keeps stale history
/// entries from an earlier read inert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpId {
    pub client: ProcessId,
    pub seq: u32,
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.client, self.seq)
    }
}

/// Unique identifier of a read operation; registration state is keyed by it.
pub type ReadId = OpId;

/// Unique id per message-disperse invocation: (sender, invocation count).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId {
    pub sender: ProcessId,
    pub count: u32,
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sender, self.count)
    }
}

/// Metadata dispersed through md-meta. Carries no value bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetaMsg {
    /// Phase-2 read registration.
    ReadValue { read: ReadId, tr: Tag },
    /// Read finished; unregister it.
    ReadComplete { read: ReadId, tr: Tag },
    /// Server `from` sent reader `read` the element for `tag`.
    ReadDisperse { tag: Tag, from: usize, read: ReadId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    WriteGetTag,
    WriteGetTagResp,
    WritePutAck,
    ReadGetTag,
    ReadGetTagResp,
    ReadValue,
    ReadComplete,
    ReadDisperse,
    CodedToReader,
    MdFull,
    MdCoded,
    AbdGet,
    AbdGetResp,
    AbdPut,
    AbdPutAck,
    AbdWriteBack,
    AbdWriteBackAck,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MessageKind::WriteGetTag => "WRITE-GET-TAG",
            MessageKind::WriteGetTagResp => "WRITE-GET-TAG-RESP",
            MessageKind::WritePutAck => "WRITE-PUT-ACK",
            MessageKind::ReadGetTag => "READ-GET-TAG",
            MessageKind::ReadGetTagResp => "READ-GET-TAG-RESP",
            MessageKind::ReadValue => "READ-VALUE",
            MessageKind::ReadComplete => "READ-COMPLETE",
            MessageKind::ReadDisperse => "READ-DISPERSE",
            MessageKind::CodedToReader => "CODED-TO-READER",
            MessageKind::MdFull => "MD-FULL",
            MessageKind::MdCoded => "MD-CODED",
            MessageKind::AbdGet => "ABD-GET",
            MessageKind::AbdGetResp => "ABD-GET-RESP",
            MessageKind::AbdPut => "ABD-PUT",
            MessageKind::AbdPutAck => "ABD-PUT-ACK",
            MessageKind::AbdWriteBack => "ABD-WRITE-BACK",
            MessageKind::AbdWriteBackAck => "ABD-WRITE-BACK-ACK",
        };
        f.write_str(s)
    }
}

/// A protocol message. `data_bytes` accounts only for value-bearing payload;
/// everything else is metadata and costs nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    WriteGetTag { op: OpId },
    WriteGetTagResp { op: OpId, tag: Tag },
    WritePutAck { tag: Tag },
    ReadGetTag { op: OpId },
    ReadGetTagResp { op: OpId, tag: Tag },
    CodedToReader { read: ReadId, tag: Tag, element: CodedElement },
    MdFull { mid: MessageId, op: OpId, tag: Tag, value: Value },
    MdCoded { mid: MessageId, op: OpId, tag: Tag, element: CodedElement },
    MdMeta { mid: MessageId, meta: MetaMsg },
    AbdGet { op: OpId },
    AbdGetResp { op: OpId, tag: Tag, value: Value },
    AbdPut { op: OpId, tag: Tag, value: Value },
    AbdPutAck { op: OpId },
    AbdWriteBack { op: OpId, tag: Tag, value: Value },
    AbdWriteBackAck { op: OpId },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::WriteGetTag { .. } => MessageKind::WriteGetTag,
            Message::WriteGetTagResp { .. } => MessageKind::WriteGetTagResp,
            Message::WritePutAck { .. } => MessageKind::WritePutAck,
            Message::ReadGetTag { .. } => MessageKind::ReadGetTag,
            Message::ReadGetTagResp { .. } => MessageKind::ReadGetTagResp,
            Message::CodedToReader { .. } => MessageKind::CodedToReader,
            Message::MdFull { .. } => MessageKind::MdFull,
            Message::MdCoded { .. } => MessageKind::MdCoded,
            Message::MdMeta { meta, .. } => match meta {
                MetaMsg::ReadValue { .. } => MessageKind::ReadValue,
                MetaMsg::ReadComplete { .. } => MessageKind::ReadComplete,
                MetaMsg::ReadDisperse { .. } => MessageKind::ReadDisperse,
            },
            Message::AbdGet { .. } => MessageKind::AbdGet,
            Message::AbdGetResp { .. } => MessageKind::AbdGetResp,
            Message::AbdPut { .. } => MessageKind::AbdPut,
            Message::AbdPutAck { .. } => MessageKind::AbdPutAck,
            Message::AbdWriteBack { .. } => MessageKind::AbdWriteBack,
            Message::AbdWriteBackAck { .. } => MessageKind::AbdWriteBackAck,
        }
    }

    /// Value-bearing bytes carried by this message; 0 for pure metadata.
    pub fn data_bytes(&self) -> usize {
        match self {
            Message::MdFull { value, .. } => value.len(),
            Message::MdCoded { element, .. } => element.payload.len(),
            Message::CodedToReader { element, .. } => element.payload.len(),
            Message::AbdGetResp { value, .. } => value.len(),
            Message::AbdPut { value, .. } => value.len(),
            Message::AbdWriteBack { value, .. } => value.len(),
            _ => 0,
        }
    }

    /// Operation this message's cost is attributed to, if any.
    pub fn cost_op(&self) -> Option<OpId> {
        match self {
            Message::MdFull { op, .. } | Message::MdCoded { op, .. } => Some(*op),
            Message::CodedToReader { read, .. } => Some(*read),
            Message::AbdGetResp { op, .. }
            | Message::AbdPut { op, .. }
            | Message::AbdWriteBack { op, .. } => Some(*op),
            _ => None,
        }
    }

    /// One-line description for traces.
    pub fn summary(&self) -> String {
        match self {
            Message::WriteGetTag { op } | Message::ReadGetTag { op } => format!("op={op}"),
            Message::WriteGetTagResp { op, tag } | Message::ReadGetTagResp { op, tag } => {
                format!("op={op} tag={tag}")
            }
            Message::WritePutAck { tag } => format!("tag={tag}"),
            Message::CodedToReader { read, tag, element } => {
                format!("read={read} tag={tag} idx={}", element.index)
            }
            Message::MdFull { mid, tag, .. } => format!("mid={mid} tag={tag}"),
            Message::MdCoded { mid, tag, element, .. } => {
                format!("mid={mid} tag={tag} idx={}", element.index)
            }
            Message::MdMeta { mid, meta } => match meta {
                MetaMsg::ReadValue { read, tr } => format!("mid={mid} read={read} tr={tr}"),
                MetaMsg::ReadComplete { read, tr } => format!("mid={mid} read={read} tr={tr}"),
                MetaMsg::ReadDisperse { tag, from, read } => {
                    format!("mid={mid} tag={tag} from=s{from} read={read}")
                }
            },
            Message::AbdGet { op } => format!("op={op}"),
            Message::AbdGetResp { op, tag, .. } => format!("op={op} tag={tag}"),
            Message::AbdPut { op, tag, .. } => format!("op={op} tag={tag}"),
            Message::AbdPutAck { op } => format!("op={op}"),
            Message::AbdWriteBack { op, tag, .. } => format!("op={op} tag={tag}"),
            Message::AbdWriteBackAck { op } => format!("op={op}"),
        }
    }
}
